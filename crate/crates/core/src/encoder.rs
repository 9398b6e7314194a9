//! BiLSTM-max sentence encoder.
//!
//! Tokens are embedded, read left-to-right by one LSTM and right-to-left by
//! another, the two hidden states at each position are concatenated into
//! `u_t = [h→_t; h←_t]`, and the encoding `z` is the coordinatewise maximum
//! of `u_t` over positions.
//!
//! Layout: input weights `W` are `[d, 4H]`, recurrent weights `U` are
//! `[H, 4H]` and the bias is `[4H]`, with gate blocks ordered
//! input, forget, candidate, output.

use rand::Rng;
use thiserror::Error;

use crate::corpus::{EmbeddingTable, PAD};
use crate::numcore::{NumError, ParamId, ParamSet, Scalar, Tape, Tensor, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("cannot encode an empty sentence")]
    EmptySentence,
    #[error("cannot encode an empty batch")]
    EmptyBatch,
    #[error("missing or misshaped parameter {0}")]
    MissingParameter(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T, E = EncoderError> = std::result::Result<T, E>;

pub const EMBEDDING: &str = "embedding";
pub const FORGET_BIAS_INIT: f64 = 1.0;

/// Parameters of one LSTM direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

impl LstmParams {
    fn init<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut uniform = |shape: &[usize]| {
            let n = shape.iter().product();
            let data = (0..n).map(|_| T::of(rng.gen_range(-k..k))).collect();
            Tensor::from_vec(shape, data).expect("shape")
        };
        let w = uniform(&[input, 4 * hidden]);
        let u = uniform(&[hidden, 4 * hidden]);
        let mut b = uniform(&[4 * hidden]);
        b.data_mut()[hidden..2 * hidden].fill(T::of(FORGET_BIAS_INIT));
        LstmParams {
            w: params.add(format!("{prefix}.w"), w),
            u: params.add(format!("{prefix}.u"), u),
            b: params.add(format!("{prefix}.b"), b),
        }
    }

    fn locate<T: Scalar>(params: &ParamSet<T>, prefix: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(LstmParams {
            w: find(params, &format!("{prefix}.w"), &[input, 4 * hidden])?,
            u: find(params, &format!("{prefix}.u"), &[hidden, 4 * hidden])?,
            b: find(params, &format!("{prefix}.b"), &[4 * hidden])?,
        })
    }
}

pub(crate) fn find<T: Scalar>(params: &ParamSet<T>, name: &str, shape: &[usize]) -> Result<ParamId> {
    params
        .find(name)
        .filter(|&id| params.value(id).shape() == shape)
        .ok_or_else(|| EncoderError::MissingParameter(name.to_string()))
}

/// One LSTM step over a batch: `x [B,d]`, `h_prev [B,H]`, `c_prev [B,H]`.
///
/// `i, f, o = σ(·)`, `g = tanh(·)` of the slices of `x·W + h_prev·U + b`;
/// `c = f⊙c_prev + i⊙g`, `h = o⊙tanh(c)`.
pub fn lstm_step<T: Scalar>(
    tape: &mut Tape<'_, T>,
    p: &LstmParams,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var), NumError> {
    let hidden = tape.value(h_prev).cols();
    let (w, u, b) = (tape.param(p.w), tape.param(p.u), tape.param(p.b));
    let xw = tape.matmul(x, w)?;
    let hu = tape.matmul(h_prev, u)?;
    let sum = tape.add(xw, hu)?;
    let pre = tape.add_bias(sum, b)?;
    let gate = |tape: &mut Tape<'_, T>, k: usize| tape.slice_cols(pre, k * hidden, (k + 1) * hidden);
    let (pi, pf, pg, po) = (gate(tape, 0)?, gate(tape, 1)?, gate(tape, 2)?, gate(tape, 3)?);
    let i = tape.sigmoid(pi)?;
    let f = tape.sigmoid(pf)?;
    let g = tape.tanh(pg)?;
    let o = tape.sigmoid(po)?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let squashed = tape.tanh(c)?;
    let h = tape.mul(o, squashed)?;
    Ok((h, c))
}

/// Fixed-length sentence representation `z ∈ R^{2H}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding<T> {
    pub z: Vec<T>,
}

/// Per-position states of one sentence, in original token order.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderActivations<T> {
    pub forward: Vec<Vec<T>>,
    pub backward: Vec<Vec<T>>,
}

impl<T: Scalar> EncoderActivations<T> {
    /// `u_t = [h→_t; h←_t]`.
    pub fn concatenated(&self, t: usize) -> Vec<T> {
        let mut u = self.forward[t].clone();
        u.extend_from_slice(&self.backward[t]);
        u
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }
}

/// Tape handles produced by [`Encoder::forward`].
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    /// `[B, 2H]` pooled encodings.
    pub pooled: Var,
    /// Forward-direction state per step; step `s` is position `s`.
    pub forward_states: Vec<Var>,
    /// Backward-direction state per step; step `s` of row `b` is position
    /// `len_b − 1 − s`.
    pub backward_states: Vec<Var>,
    pub lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoder {
    pub embedding: ParamId,
    pub forward: LstmParams,
    pub backward: LstmParams,
    embed_dim: usize,
    hidden: usize,
}

impl Encoder {
    /// Registers encoder parameters, taking embedding rows from `embeddings`.
    pub fn init<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        embeddings: EmbeddingTable<T>,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        assert!(hidden >= 1, "hidden size must be positive");
        let embed_dim = embeddings.dim();
        let embedding = params.add(EMBEDDING, embeddings.into_matrix());
        let forward = LstmParams::init(params, "lstm.fwd", embed_dim, hidden, rng);
        let backward = LstmParams::init(params, "lstm.bwd", embed_dim, hidden, rng);
        Encoder {
            embedding,
            forward,
            backward,
            embed_dim,
            hidden,
        }
    }

    /// Finds encoder parameters by name, e.g. after loading a checkpoint.
    pub fn locate<T: Scalar>(params: &ParamSet<T>, vocab_size: usize, embed_dim: usize, hidden: usize) -> Result<Self> {
        Ok(Encoder {
            embedding: find(params, EMBEDDING, &[vocab_size, embed_dim])?,
            forward: LstmParams::locate(params, "lstm.fwd", embed_dim, hidden)?,
            backward: LstmParams::locate(params, "lstm.bwd", embed_dim, hidden)?,
            embed_dim,
            hidden,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    /// Records the encoder over a batch of token-index sequences.
    ///
    /// Sequences are right-padded with PAD; the backward LSTM reads each
    /// sequence reversed, so both directions start from zero state on a real
    /// token. Padded steps never reach the pooled output.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, batch: &[Vec<usize>]) -> Result<EncoderTrace> {
        if batch.is_empty() {
            return Err(EncoderError::EmptyBatch);
        }
        if batch.iter().any(Vec::is_empty) {
            return Err(EncoderError::EmptySentence);
        }
        let lengths: Vec<usize> = batch.iter().map(Vec::len).collect();
        let steps = *lengths.iter().max().expect("non-empty batch");
        let rows = batch.len();
        let table = tape.param(self.embedding);

        let run = |tape: &mut Tape<'_, T>, p: &LstmParams, reversed: bool| -> Result<Vec<Var>> {
            let mut h = tape.constant(Tensor::zeros(&[rows, self.hidden]))?;
            let mut c = tape.constant(Tensor::zeros(&[rows, self.hidden]))?;
            let mut states = Vec::with_capacity(steps);
            for s in 0..steps {
                let idx: Vec<usize> = batch
                    .iter()
                    .map(|toks| match (s < toks.len(), reversed) {
                        (false, _) => PAD,
                        (true, false) => toks[s],
                        (true, true) => toks[toks.len() - 1 - s],
                    })
                    .collect();
                let x = tape.gather_rows(table, &idx)?;
                (h, c) = lstm_step(tape, p, x, h, c)?;
                states.push(h);
            }
            Ok(states)
        };
        let forward_states = run(tape, &self.forward, false)?;
        let backward_states = run(tape, &self.backward, true)?;

        let fwd_pool = tape.max_over_time(&forward_states, &lengths, false)?;
        let bwd_pool = tape.max_over_time(&backward_states, &lengths, true)?;
        let pooled = tape.concat_cols(&[fwd_pool, bwd_pool])?;
        Ok(EncoderTrace {
            pooled,
            forward_states,
            backward_states,
            lengths,
        })
    }

    pub fn encode<T: Scalar>(&self, params: &ParamSet<T>, tokens: &[usize]) -> Result<Encoding<T>> {
        if tokens.is_empty() {
            return Err(EncoderError::EmptySentence);
        }
        Ok(self
            .encode_batch(params, std::slice::from_ref(&tokens.to_vec()))?
            .remove(0))
    }

    /// Encodes every sequence; each result is bit-identical to [`Self::encode`].
    pub fn encode_batch<T: Scalar>(&self, params: &ParamSet<T>, batch: &[Vec<usize>]) -> Result<Vec<Encoding<T>>> {
        let mut tape = Tape::new(params);
        let trace = self.forward(&mut tape, batch)?;
        let pooled = tape.value(trace.pooled);
        Ok((0..batch.len())
            .map(|r| Encoding {
                z: pooled.row(r).to_vec(),
            })
            .collect())
    }

    /// Per-position states of a single sentence.
    pub fn activations<T: Scalar>(&self, params: &ParamSet<T>, tokens: &[usize]) -> Result<EncoderActivations<T>> {
        let mut tape = Tape::new(params);
        let trace = self.forward(&mut tape, std::slice::from_ref(&tokens.to_vec()))?;
        let n = tokens.len();
        let forward = (0..n)
            .map(|t| tape.value(trace.forward_states[t]).row(0).to_vec())
            .collect();
        let backward = (0..n)
            .map(|t| tape.value(trace.backward_states[n - 1 - t]).row(0).to_vec())
            .collect();
        Ok(EncoderActivations { forward, backward })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn single_direction(w: &[f64], u: &[f64], b: &[f64], d: usize, h: usize) -> (ParamSet<f64>, LstmParams) {
        let mut ps = ParamSet::new();
        let p = LstmParams {
            w: ps.add("w", Tensor::from_vec(&[d, 4 * h], w.to_vec()).unwrap()),
            u: ps.add("u", Tensor::from_vec(&[h, 4 * h], u.to_vec()).unwrap()),
            b: ps.add("b", Tensor::from_vec(&[4 * h], b.to_vec()).unwrap()),
        };
        (ps, p)
    }

    fn step(ps: &ParamSet<f64>, p: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new(ps);
        let x = tape.constant(Tensor::from_vec(&[1, x.len()], x.to_vec()).unwrap()).unwrap();
        let hv = tape.constant(Tensor::from_vec(&[1, h.len()], h.to_vec()).unwrap()).unwrap();
        let cv = tape.constant(Tensor::from_vec(&[1, c.len()], c.to_vec()).unwrap()).unwrap();
        let (h, c) = lstm_step(&mut tape, p, x, hv, cv).unwrap();
        (tape.value(h).data().to_vec(), tape.value(c).data().to_vec())
    }

    #[test]
    fn zero_weights_halve_the_cell() {
        let (ps, p) = single_direction(&[0.0; 8], &[0.0; 16], &[0.0; 8], 1, 2);
        let (h, c) = step(&ps, &p, &[3.0], &[0.4, -0.2], &[0.0, 0.0]);
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(c, vec![0.0, 0.0]);
        let (h, c) = step(&ps, &p, &[3.0], &[0.0, 0.0], &[0.8, -0.6]);
        assert_eq!(c, vec![0.4, -0.3]);
        assert_eq!(h, vec![0.5 * 0.4f64.tanh(), 0.5 * (-0.3f64).tanh()]);
    }

    #[test]
    fn scalar_lstm_matches_hand_computation() {
        // H = d = 1, W = [1,0,0,0]: only the input gate sees x.
        let (ps, p) = single_direction(&[1.0, 0.0, 0.0, 0.0], &[0.0; 4], &[0.0; 4], 1, 1);
        let (h, c) = step(&ps, &p, &[0.0], &[0.0], &[0.0]);
        assert_eq!((h[0], c[0]), (0.0, 0.0));

        // all gates active, nonzero state
        let w = [0.5, -0.25, 1.5, 0.75];
        let u = [0.2, 0.1, -0.3, 0.4];
        let b = [0.1, 1.0, 0.0, -0.2];
        let (ps, p) = single_direction(&w, &u, &b, 1, 1);
        let (x, h0, c0) = (0.8, 0.3, -0.5);
        let pre: Vec<f64> = (0..4).map(|k| w[k] * x + u[k] * h0 + b[k]).collect();
        let (i, f, g, o) = (sigmoid(pre[0]), sigmoid(pre[1]), pre[2].tanh(), sigmoid(pre[3]));
        let c_expected = f * c0 + i * g;
        let h_expected = o * c_expected.tanh();
        let (h, c) = step(&ps, &p, &[x], &[h0], &[c0]);
        assert!((c[0] - c_expected).abs() < 1e-15);
        assert!((h[0] - h_expected).abs() < 1e-15);
    }

    fn tiny(hidden: usize) -> (ParamSet<f64>, Encoder) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut ps = ParamSet::new();
        let table = EmbeddingTable::random(12, 5, &mut rng);
        let enc = Encoder::init(&mut ps, table, hidden, &mut rng);
        (ps, enc)
    }

    #[test]
    fn init_sets_forget_bias_and_bounds() {
        let (ps, enc) = tiny(4);
        let b = ps.value(enc.forward.b).data();
        assert!(b[4..8].iter().all(|&v| v == 1.0));
        let k = 1.0 / 2.0;
        assert!(ps.value(enc.backward.u).data().iter().all(|v| v.abs() <= k));
        assert!(ps.value(enc.embedding).row(PAD).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_token_encoding_is_its_state() {
        let (ps, enc) = tiny(3);
        let z = enc.encode(&ps, &[4]).unwrap();
        let acts = enc.activations(&ps, &[4]).unwrap();
        assert_eq!(z.z, acts.concatenated(0));
    }

    #[test]
    fn pooling_is_coordinatewise_max_of_states() {
        let (ps, enc) = tiny(3);
        let toks = [2, 7, 3, 3, 11];
        let z = enc.encode(&ps, &toks).unwrap();
        let acts = enc.activations(&ps, &toks).unwrap();
        for k in 0..6 {
            let best = (0..toks.len())
                .map(|t| acts.concatenated(t)[k])
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(z.z[k], best);
        }
    }

    #[test]
    fn batched_encodings_match_unbatched_bitwise() {
        let (ps, enc) = tiny(4);
        let batch = vec![vec![2, 3], vec![5, 6, 7, 8, 9], vec![1, 1, 1]];
        let together = enc.encode_batch(&ps, &batch).unwrap();
        for (toks, z) in batch.iter().zip(&together) {
            let alone = enc.encode(&ps, toks).unwrap();
            assert_eq!(&alone, z);
            // all-UNK sentence still encodes to something non-trivial
            assert!(z.z.iter().all(|v| v.is_finite()));
        }
        assert!(together[2].z.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let (ps, enc) = tiny(2);
        assert_eq!(enc.encode(&ps, &[]), Err(EncoderError::EmptySentence));
        assert_eq!(enc.encode_batch(&ps, &[]), Err(EncoderError::EmptyBatch));
        assert_eq!(
            enc.encode_batch(&ps, &[vec![2], vec![]]),
            Err(EncoderError::EmptySentence)
        );
    }

    #[test]
    fn zeroed_backward_direction_is_constant_and_leaves_forward_half_alone() {
        let (mut ps, enc) = tiny(3);
        let toks = [2, 9, 4, 6];
        let before = enc.encode(&ps, &toks).unwrap();
        for id in [enc.backward.w, enc.backward.u, enc.backward.b] {
            ps.get_mut(id).value.data_mut().fill(0.0);
        }
        let after = enc.encode(&ps, &toks).unwrap();
        let other = enc.encode(&ps, &[5, 5, 10]).unwrap();
        assert_eq!(before.z[..3], after.z[..3]);
        // zero weights keep every backward state at zero
        assert!(after.z[3..].iter().all(|&v| v == 0.0));
        assert_eq!(after.z[3..], other.z[3..]);
    }

    #[test]
    fn locate_finds_parameters_by_name() {
        let (ps, enc) = tiny(3);
        assert_eq!(Encoder::locate(&ps, 12, 5, 3).unwrap(), enc);
        assert!(Encoder::locate(&ps, 12, 5, 4).is_err());
    }
}
