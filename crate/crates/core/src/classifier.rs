//! MLP real/fake head, minibatch SGD training and evaluation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::checkpoint::{self, CheckpointError};
use crate::encoder::{find, EncoderError, Encoding};
use crate::fakegen::{Label, LabeledExample};
use crate::model::{FakeDetector, ModelError};
use crate::numcore::{NumError, ParamId, ParamSet, Scalar, Tape, Tensor, Var};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden1: 1024,
            hidden2: 512,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return Err("MLP hidden widths must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

/// Two tanh hidden layers followed by a 2-way output layer. Output column 1
/// is REAL, column 0 is FAKE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpHead {
    layers: [Dense; 3],
    config: ClassifierConfig,
    input_dim: usize,
}

impl MlpHead {
    /// Weights uniform(±1/√fan_in), biases zero.
    pub fn init<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        input_dim: usize,
        config: ClassifierConfig,
        rng: &mut R,
    ) -> Self {
        let dims = [input_dim, config.hidden1, config.hidden2, 2];
        let layers = std::array::from_fn(|l| {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let k = 1.0 / (fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| T::of(rng.gen_range(-k..k))).collect();
            Dense {
                w: params.add(format!("mlp.{l}.w"), Tensor::from_vec(&[fan_in, fan_out], w).expect("shape")),
                b: params.add(format!("mlp.{l}.b"), Tensor::zeros(&[fan_out])),
            }
        });
        MlpHead {
            layers,
            config,
            input_dim,
        }
    }

    pub fn locate<T: Scalar>(params: &ParamSet<T>, input_dim: usize) -> Result<Self, EncoderError> {
        let width = |l: usize| {
            params
                .find(&format!("mlp.{l}.w"))
                .map(|id| params.value(id).shape().to_vec())
                .filter(|s| s.len() == 2)
                .map(|s| s[1])
                .ok_or_else(|| EncoderError::MissingParameter(format!("mlp.{l}.w")))
        };
        let config = ClassifierConfig {
            hidden1: width(0)?,
            hidden2: width(1)?,
        };
        let dims = [input_dim, config.hidden1, config.hidden2, 2];
        let mut layers = Vec::with_capacity(3);
        for l in 0..3 {
            layers.push(Dense {
                w: find(params, &format!("mlp.{l}.w"), &[dims[l], dims[l + 1]])?,
                b: find(params, &format!("mlp.{l}.b"), &[dims[l + 1]])?,
            });
        }
        Ok(MlpHead {
            layers: [layers[0], layers[1], layers[2]],
            config,
            input_dim,
        })
    }

    pub fn config(&self) -> ClassifierConfig {
        self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[Dense; 3] {
        &self.layers
    }

    /// `[B, input_dim]` encodings to `[B, 2]` logits.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, z: Var) -> Result<Var, NumError> {
        let mut x = z;
        for (l, layer) in self.layers.iter().enumerate() {
            let w = tape.param(layer.w);
            let b = tape.param(layer.b);
            let xw = tape.matmul(x, w)?;
            x = tape.add_bias(xw, b)?;
            if l < 2 {
                x = tape.tanh(x)?;
            }
        }
        Ok(x)
    }

    /// Probability of REAL for one encoding.
    pub fn classify<T: Scalar>(&self, params: &ParamSet<T>, z: &Encoding<T>) -> Result<T, ModelError> {
        if z.z.len() != self.input_dim {
            return Err(ModelError::ShapeMismatch {
                expected: self.input_dim,
                found: z.z.len(),
            });
        }
        let mut tape = Tape::new(params);
        let input = tape.constant(Tensor::from_vec(&[1, z.z.len()], z.z.clone())?)?;
        let logits = self.forward(&mut tape, input)?;
        Ok(softmax_rows(tape.value(logits)).row(0)[1])
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let cols = logits.cols();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(cols) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Multiplies the learning rate after an epoch without validation gain.
    pub lr_decay_factor: f64,
    pub seed: u64,
    pub freeze_embeddings: bool,
    pub reduction: LossReduction,
    /// Clip the joint gradient norm of each step to this value.
    pub max_grad_norm: Option<f64>,
}

/// How per-example losses of a minibatch combine into the step gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossReduction {
    Mean,
    #[default]
    Sum,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 15,
            learning_rate: 0.1,
            lr_decay_factor: 0.5,
            seed: 0,
            freeze_embeddings: false,
            reduction: LossReduction::Sum,
            max_grad_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad("lr_decay_factor must be in (0, 1]");
        }
        if self.max_grad_norm.is_some_and(|m| !(m > 0.0 && m.is_finite())) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("cannot evaluate an empty dataset")]
    EmptyDataset,
    #[error("training diverged in epoch {epoch}: {source}")]
    DivergedTraining { epoch: usize, source: NumError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    /// 1-based epoch with the highest validation accuracy, earliest on ties.
    pub best_epoch: usize,
    pub best_valid_accuracy: f64,
    pub best_checkpoint: Option<PathBuf>,
}

/// Where training writes its artifacts.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOutputs<'a> {
    pub checkpoint: Option<&'a Path>,
    /// Receives one JSON line per epoch; truncated when training starts.
    pub metrics: Option<&'a Path>,
}

fn prepare<T: Scalar>(model: &FakeDetector<T>, data: &[LabeledExample]) -> (Vec<Vec<usize>>, Vec<usize>) {
    data.iter()
        .map(|ex| (model.token_ids(&ex.sentence), ex.label.class()))
        .unzip()
}

fn diverged(epoch: usize) -> impl Fn(ModelError) -> TrainError {
    move |e| match e {
        ModelError::Num(source) | ModelError::Encoder(EncoderError::Num(source)) => {
            TrainError::DivergedTraining { epoch, source }
        }
        other => TrainError::Model(other),
    }
}

/// Minibatch SGD on cross-entropy, summed or averaged over the batch per
/// `cfg.reduction`, with optional gradient-norm clipping.
///
/// The training split is reshuffled every epoch from a stream derived from
/// `cfg.seed`. After each epoch the validation accuracy is measured; an
/// improvement snapshots the parameters (and writes the checkpoint), no
/// improvement multiplies the learning rate by `lr_decay_factor`. On return
/// the model holds the best snapshot.
pub fn train<T: Scalar>(
    model: &mut FakeDetector<T>,
    train: &[LabeledExample],
    valid: &[LabeledExample],
    cfg: &TrainConfig,
    outputs: TrainOutputs<'_>,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if valid.is_empty() {
        return Err(TrainError::EmptySplit("valid"));
    }
    if !train.iter().any(|e| e.label == Label::Real) || !train.iter().any(|e| e.label == Label::Fake) {
        return Err(TrainError::SingleClassData);
    }
    model.set_embeddings_frozen(cfg.freeze_embeddings);
    let (train_ids, train_classes) = prepare(model, train);

    let mut metrics_file = match outputs.metrics {
        Some(p) => Some(File::create(p)?),
        None => None,
    };

    let mut lr = cfg.learning_rate;
    let mut report = TrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        best_valid_accuracy: f64::NEG_INFINITY,
        best_checkpoint: None,
    };
    let mut best_params = model.params.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let mut rng = seed::rng_for(cfg.seed, &format!("epoch-{epoch}"));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Vec<usize>> = chunk.iter().map(|&i| train_ids[i].clone()).collect();
            let classes: Vec<usize> = chunk.iter().map(|&i| train_classes[i]).collect();
            let grads = {
                let mut tape = Tape::new(&model.params);
                let loss = model.loss(&mut tape, &batch, &classes).map_err(diverged(epoch))?;
                let value = tape.value(loss).data()[0].as_f64();
                let probs = tape.probabilities(loss).expect("loss node");
                correct += classes
                    .iter()
                    .enumerate()
                    .filter(|&(r, &c)| predicted_class(probs.row(r)[1]) == c)
                    .count();
                loss_sum += value * chunk.len() as f64;
                tape.backward(loss)
                    .map_err(|source| TrainError::DivergedTraining { epoch, source })?
            };
            model.params.accumulate(&grads);
            if cfg.reduction == LossReduction::Sum {
                model.params.scale_grads(chunk.len() as f64);
            }
            if let Some(max_norm) = cfg.max_grad_norm {
                model.params.clip_grad_norm(max_norm);
            }
            model
                .params
                .sgd_step(T::of(lr))
                .map_err(|source| TrainError::DivergedTraining { epoch, source })?;
        }

        let valid_accuracy = evaluate(model, valid)?.accuracy;
        let entry = EpochMetrics {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            valid_accuracy,
        };
        if !entry.train_loss.is_finite() {
            return Err(TrainError::DivergedTraining {
                epoch,
                source: NumError::NonFiniteValue { op: "train_loss" },
            });
        }
        if let Some(f) = metrics_file.as_mut() {
            serde_json::to_writer(&mut *f, &entry).map_err(io::Error::from)?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        if valid_accuracy > report.best_valid_accuracy {
            report.best_valid_accuracy = valid_accuracy;
            report.best_epoch = epoch;
            best_params.copy_values_from(&model.params);
            if let Some(path) = outputs.checkpoint {
                checkpoint::save(model, path)?;
                report.best_checkpoint = Some(path.to_path_buf());
            }
        } else {
            lr *= cfg.lr_decay_factor;
        }
        report.epochs.push(entry);
    }
    model.params.copy_values_from(&best_params);
    Ok(report)
}

fn predicted_class<T: Scalar>(p_real: T) -> usize {
    if p_real >= T::of(0.5) {
        Label::Real.class()
    } else {
        Label::Fake.class()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `confusion[actual][predicted]`, indexed by class (0 = FAKE, 1 = REAL).
    pub confusion: [[usize; 2]; 2],
    pub fake: ClassMetrics,
    pub real: ClassMetrics,
}

/// Accuracy and per-class precision/recall in one pass. Precision of a
/// class that was never predicted is reported as 0.
pub fn metrics_from_predictions(actual: &[Label], predicted: &[Label]) -> EvalMetrics {
    assert_eq!(actual.len(), predicted.len());
    let mut confusion = [[0usize; 2]; 2];
    for (&a, &p) in actual.iter().zip(predicted) {
        confusion[a.class()][p.class()] += 1;
    }
    let total = actual.len();
    let correct = confusion[0][0] + confusion[1][1];
    let class = |c: usize| {
        let tp = confusion[c][c] as f64;
        let predicted = (confusion[0][c] + confusion[1][c]) as f64;
        let support = confusion[c][0] + confusion[c][1];
        ClassMetrics {
            precision: if predicted > 0.0 { tp / predicted } else { 0.0 },
            recall: if support > 0 { tp / support as f64 } else { 0.0 },
            support,
        }
    };
    EvalMetrics {
        total,
        correct,
        accuracy: if total > 0 { correct as f64 / total as f64 } else { 0.0 },
        confusion,
        fake: class(0),
        real: class(1),
    }
}

const EVAL_BATCH: usize = 256;

pub fn predict<T: Scalar>(model: &FakeDetector<T>, data: &[LabeledExample]) -> Result<Vec<Label>, ModelError> {
    let (ids, _) = prepare(model, data);
    let mut out = Vec::with_capacity(data.len());
    for chunk in ids.chunks(EVAL_BATCH) {
        for p in model.predict_ids(chunk)? {
            out.push(Label::from_class(predicted_class(p)).expect("binary"));
        }
    }
    Ok(out)
}

pub fn evaluate<T: Scalar>(model: &FakeDetector<T>, data: &[LabeledExample]) -> Result<EvalMetrics, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let predicted = predict(model, data)?;
    let actual: Vec<Label> = data.iter().map(|e| e.label).collect();
    Ok(metrics_from_predictions(&actual, &predicted))
}
