//! Binary model checkpoints.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic        8 bytes  "FSDCKPT\0"
//! version      u32      currently 1
//! d, H, V      u32 × 3  embedding dim, hidden size, vocabulary size
//! precision    u8       4 = f32, 8 = f64
//! vocabulary   u32 count, then per token: u32 byte length, UTF-8 bytes
//! parameters   u32 count, then per parameter:
//!              u32 name length, name, u32 rank, u64 × rank dims,
//!              raw values at the header precision
//! ```
//!
//! Saving and loading is bit-exact.

use std::fs;
use std::io;
use std::path::Path;
use thiserror::Error;

use crate::classifier::MlpHead;
use crate::corpus::{Vocabulary, PAD_TOKEN, UNK_TOKEN};
use crate::encoder::{Encoder, EncoderError};
use crate::model::FakeDetector;
use crate::numcore::{ParamSet, Precision, Scalar, Tensor};

pub const MAGIC: &[u8; 8] = b"FSDCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint holds {found} values, expected {expected}")]
    PrecisionMismatch { expected: Precision, found: Precision },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Layout(#[from] EncoderError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = CheckpointError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u32,
    pub embed_dim: usize,
    pub hidden: usize,
    pub vocab_size: usize,
    pub precision: Precision,
}

pub fn to_bytes<T: Scalar>(model: &FakeDetector<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, model.encoder.embed_dim() as u32);
    put_u32(&mut out, model.encoder.hidden() as u32);
    put_u32(&mut out, model.vocab.len() as u32);
    out.push(T::PRECISION.code());

    put_u32(&mut out, model.vocab.len() as u32);
    for tok in model.vocab.tokens() {
        put_str(&mut out, tok);
    }

    put_u32(&mut out, model.params.len() as u32);
    for (_, p) in model.params.iter() {
        put_str(&mut out, &p.name);
        put_u32(&mut out, p.value.shape().len() as u32);
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn save<T: Scalar>(model: &FakeDetector<T>, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::Corrupt("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CheckpointError::Corrupt("invalid UTF-8".into()))
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<Header> {
    if r.take(8).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let embed_dim = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let vocab_size = r.u32()? as usize;
    let code = r.take(1)?[0];
    let precision = Precision::from_code(code)
        .ok_or_else(|| CheckpointError::Corrupt(format!("precision code {code}")))?;
    Ok(Header {
        version,
        embed_dim,
        hidden,
        vocab_size,
        precision,
    })
}

/// Reads only the header, e.g. to pick the precision before loading.
pub fn peek_header(path: &Path) -> Result<Header> {
    let bytes = fs::read(path)?;
    read_header(&mut Reader { bytes: &bytes, pos: 0 })
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<FakeDetector<T>> {
    let mut r = Reader { bytes, pos: 0 };
    let header = read_header(&mut r)?;
    if header.precision != T::PRECISION {
        return Err(CheckpointError::PrecisionMismatch {
            expected: T::PRECISION,
            found: header.precision,
        });
    }
    let count = r.u32()? as usize;
    if count != header.vocab_size || count < 2 {
        return Err(CheckpointError::Corrupt("vocabulary size disagrees with header".into()));
    }
    let tokens = (0..count).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    if tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
        return Err(CheckpointError::Corrupt("reserved vocabulary entries missing".into()));
    }
    let vocab = Vocabulary::from_tokens(tokens.into_iter().skip(2));

    let width = std::mem::size_of::<T>();
    let mut params = ParamSet::new();
    for _ in 0..r.u32()? {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(width).ok_or_else(|| CheckpointError::Corrupt("size overflow".into()))?)?;
        let data = raw.chunks_exact(width).map(T::read_le).collect();
        let value = Tensor::from_vec(&shape, data).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        params.add(name, value);
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }
    let encoder = Encoder::locate(&params, header.vocab_size, header.embed_dim, header.hidden)?;
    let head = MlpHead::locate(&params, encoder.output_dim())?;
    Ok(FakeDetector {
        vocab,
        params,
        encoder,
        head,
    })
}

pub fn load<T: Scalar>(path: &Path) -> Result<FakeDetector<T>> {
    from_bytes(&fs::read(path)?)
}

/// Stable 64-bit fingerprint of the serialized model.
pub fn fingerprint<T: Scalar>(model: &FakeDetector<T>) -> u64 {
    crate::seed::fnv1a64(&to_bytes(model))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassifierConfig;
    use crate::corpus::EmbeddingTable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model<T: Scalar>() -> FakeDetector<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vocab = Vocabulary::from_tokens(["a", "b", "c"]);
        let table = EmbeddingTable::random(vocab.len(), 3, &mut rng);
        FakeDetector::new(vocab, table, 2, ClassifierConfig { hidden1: 3, hidden2: 2 }, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model::<f32>();
        let bytes = to_bytes(&m);
        let back: FakeDetector<f32> = from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back), bytes);

        let m = model::<f64>();
        let back: FakeDetector<f64> = from_bytes(&to_bytes(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn header_layout() {
        let bytes = to_bytes(&model::<f64>());
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 5);
        assert_eq!(bytes[24], 8);
    }

    #[test]
    fn precision_and_corruption_are_detected() {
        let bytes = to_bytes(&model::<f32>());
        assert!(matches!(
            from_bytes::<f64>(&bytes),
            Err(CheckpointError::PrecisionMismatch { .. })
        ));
        assert!(matches!(from_bytes::<f32>(&bytes[..bytes.len() - 1]), Err(CheckpointError::Corrupt(_))));
        assert!(matches!(from_bytes::<f32>(b"nonsense"), Err(CheckpointError::BadMagic)));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes::<f32>(&extra).is_err());
    }
}
