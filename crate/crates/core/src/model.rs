//! The fake sentence detector: vocabulary, BiLSTM-max encoder and MLP head
//! sharing one parameter set.

use rand::Rng;
use thiserror::Error;

use crate::classifier::{ClassifierConfig, MlpHead};
use crate::corpus::{EmbeddingTable, Sentence, Vocabulary};
use crate::encoder::{Encoder, EncoderError, Encoding};
use crate::numcore::{NumError, ParamSet, Scalar, Tape, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("encoding has {found} dimensions, head expects {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("embedding table has {found} rows for a vocabulary of {expected}")]
    VocabMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Dimensions that determine the parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub classifier: ClassifierConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FakeDetector<T> {
    pub vocab: Vocabulary,
    pub params: ParamSet<T>,
    pub encoder: Encoder,
    pub head: MlpHead,
}

impl<T: Scalar> FakeDetector<T> {
    pub fn new<R: Rng + ?Sized>(
        vocab: Vocabulary,
        embeddings: EmbeddingTable<T>,
        hidden: usize,
        classifier: ClassifierConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if embeddings.vocab_size() != vocab.len() {
            return Err(ModelError::VocabMismatch {
                expected: vocab.len(),
                found: embeddings.vocab_size(),
            });
        }
        let mut params = ParamSet::new();
        let encoder = Encoder::init(&mut params, embeddings, hidden, rng);
        let head = MlpHead::init(&mut params, encoder.output_dim(), classifier, rng);
        Ok(FakeDetector {
            vocab,
            params,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            vocab_size: self.vocab.len(),
            embed_dim: self.encoder.embed_dim(),
            hidden: self.encoder.hidden(),
            classifier: self.head.config(),
        }
    }

    pub fn token_ids(&self, s: &Sentence) -> Vec<usize> {
        self.vocab.encode(s)
    }

    pub fn encode(&self, s: &Sentence) -> Result<Encoding<T>> {
        Ok(self.encoder.encode(&self.params, &self.token_ids(s))?)
    }

    pub fn encode_batch(&self, sentences: &[Sentence]) -> Result<Vec<Encoding<T>>> {
        let ids: Vec<Vec<usize>> = sentences.iter().map(|s| self.token_ids(s)).collect();
        Ok(self.encoder.encode_batch(&self.params, &ids)?)
    }

    /// Probability that `z` encodes a real sentence.
    pub fn classify(&self, z: &Encoding<T>) -> Result<T> {
        self.head.classify(&self.params, z)
    }

    /// Probability of REAL for each token-index sequence.
    pub fn predict_ids(&self, batch: &[Vec<usize>]) -> Result<Vec<T>> {
        let mut tape = Tape::new(&self.params);
        let trace = self.encoder.forward(&mut tape, batch)?;
        let logits = self.head.forward(&mut tape, trace.pooled)?;
        let probs = crate::classifier::softmax_rows(tape.value(logits));
        Ok((0..batch.len()).map(|r| probs.row(r)[1]).collect())
    }

    /// Records mean cross-entropy of the batch against class indices.
    pub fn loss(&self, tape: &mut Tape<'_, T>, batch: &[Vec<usize>], classes: &[usize]) -> Result<Var> {
        let trace = self.encoder.forward(tape, batch)?;
        let logits = self.head.forward(tape, trace.pooled)?;
        Ok(tape.softmax_cross_entropy(logits, classes)?)
    }

    pub fn set_embeddings_frozen(&mut self, frozen: bool) {
        self.params.get_mut(self.encoder.embedding).frozen = frozen;
    }
}
