//! Sentence encoders trained to tell real sentences from corrupted copies.
//!
//! The pipeline:
//!
//! 1. [`corpus`]: tokenize text, build a vocabulary, load word vectors.
//! 2. [`fakegen`]: corrupt sentences by swapping two words or dropping one
//!    and assemble a labeled real/fake dataset.
//! 3. [`encoder`] + [`classifier`]: a BiLSTM with max pooling feeds a
//!    two-hidden-layer MLP; [`classifier::train`] fits both with SGD.
//! 4. [`probe`]: freeze the encoder and fit logistic-regression probes for
//!    sentence length, word content and bigram inversion.
//!
//! Everything differentiable is built on the tape in [`numcore`].

pub mod checkpoint;
pub mod classifier;
pub mod corpus;
pub mod encoder;
pub mod fakegen;
pub mod model;
pub mod numcore;
pub mod probe;
pub mod seed;

pub use classifier::{ClassifierConfig, TrainConfig, TrainReport};
pub use corpus::{Sentence, Vocabulary};
pub use encoder::Encoding;
pub use fakegen::{Label, LabeledExample, Strategy};
pub use model::FakeDetector;
pub use numcore::{Precision, Scalar};
