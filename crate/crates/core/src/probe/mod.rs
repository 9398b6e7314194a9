//! Probing tasks on frozen encodings.
//!
//! Three tasks are generated directly from raw token sequences:
//!
//! * `sentlen`: sentence length bucketed into ordered bins,
//! * `wc`: which of K target words the sentence contains,
//! * `bshift`: whether an adjacent pair of tokens was inverted.
//!
//! Each dataset is split 80/10/10 by a seeded hash of the sentence id. A
//! logistic-regression probe is fit on the train split for every L2 strength
//! in the grid, the strength with the best validation accuracy is kept, and
//! its test accuracy is reported. The encoder is only read.

pub mod logreg;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::corpus::{build_vocab, Sentence};
use crate::fakegen::swap_positions;
use crate::model::{FakeDetector, ModelError};
use crate::numcore::Scalar;
use crate::seed;
use logreg::{fit, FitOptions};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("length thresholds must be strictly increasing")]
    UnorderedBins,
    #[error("length bin {0} has no sentences")]
    DegenerateBins(usize),
    #[error("{task}: {detail}")]
    InsufficientExamples { task: ProbeTask, detail: String },
    #[error("invalid probe configuration: {0}")]
    InvalidConfig(String),
    #[error("no encoding for sentence {0}")]
    MissingEncoding(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T, E = ProbeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProbeTask {
    #[serde(rename = "sentlen")]
    SentLen,
    #[serde(rename = "wc")]
    WordContent,
    #[serde(rename = "bshift")]
    BigramShift,
}

impl fmt::Display for ProbeTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeTask::SentLen => "sentlen",
            ProbeTask::WordContent => "wc",
            ProbeTask::BigramShift => "bshift",
        })
    }
}

impl FromStr for ProbeTask {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "sentlen" => Ok(ProbeTask::SentLen),
            "wc" => Ok(ProbeTask::WordContent),
            "bshift" => Ok(ProbeTask::BigramShift),
            other => Err(format!("unknown probing task '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeExample {
    pub sentence: Sentence,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeDataset {
    pub task: ProbeTask,
    pub num_classes: usize,
    pub train: Vec<ProbeExample>,
    pub valid: Vec<ProbeExample>,
    pub test: Vec<ProbeExample>,
}

/// Minimum sentences per class for a usable dataset.
pub const MIN_CLASS_EXAMPLES: usize = 10;

impl ProbeDataset {
    /// Splits 80/10/10 by a seeded hash of each sentence id.
    pub fn split(task: ProbeTask, num_classes: usize, examples: Vec<ProbeExample>, seed: u64) -> Result<Self> {
        let mut ds = ProbeDataset {
            task,
            num_classes,
            train: Vec::new(),
            valid: Vec::new(),
            test: Vec::new(),
        };
        for ex in examples {
            debug_assert!(ex.label < num_classes);
            match seed::derive_seed(seed, ex.sentence.id()) % 10 {
                0..=7 => ds.train.push(ex),
                8 => ds.valid.push(ex),
                _ => ds.test.push(ex),
            }
        }
        for c in 0..num_classes {
            if !ds.train.iter().any(|e| e.label == c) {
                return Err(ProbeError::InsufficientExamples {
                    task,
                    detail: format!("class {c} missing from the train split"),
                });
            }
        }
        if ds.valid.is_empty() || ds.test.is_empty() {
            return Err(ProbeError::InsufficientExamples {
                task,
                detail: "validation or test split is empty".into(),
            });
        }
        Ok(ds)
    }

    pub fn split_sizes(&self) -> [usize; 3] {
        [self.train.len(), self.valid.len(), self.test.len()]
    }

    pub fn all(&self) -> impl Iterator<Item = &ProbeExample> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Inclusive upper bounds of all bins but the last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthBins {
    thresholds: Vec<usize>,
}

impl LengthBins {
    pub fn new(thresholds: Vec<usize>) -> Result<Self> {
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ProbeError::UnorderedBins);
        }
        Ok(LengthBins { thresholds })
    }

    /// Thresholds at the empirical quantiles `k/bins` of the corpus length
    /// distribution; duplicates and thresholds leaving the last bin empty
    /// are dropped.
    pub fn quantiles(corpus: &[Sentence], bins: usize) -> Self {
        let mut lengths: Vec<usize> = corpus.iter().map(Sentence::len).collect();
        lengths.sort_unstable();
        let n = lengths.len();
        let max = lengths.last().copied().unwrap_or(0);
        let mut thresholds: Vec<usize> = (1..bins)
            .filter_map(|k| (k * n / bins).checked_sub(1).map(|i| lengths[i]))
            .filter(|&t| t < max)
            .collect();
        thresholds.dedup();
        LengthBins { thresholds }
    }

    pub fn thresholds(&self) -> &[usize] {
        &self.thresholds
    }

    pub fn num_bins(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn bin(&self, length: usize) -> usize {
        self.thresholds.iter().filter(|&&t| length > t).count()
    }
}

pub const DEFAULT_SENTLEN_BINS: usize = 6;

pub fn gen_sentlen(corpus: &[Sentence], bins: &LengthBins, seed: u64) -> Result<ProbeDataset> {
    let mut counts = vec![0usize; bins.num_bins()];
    let examples: Vec<ProbeExample> = corpus
        .iter()
        .map(|s| {
            let label = bins.bin(s.len());
            counts[label] += 1;
            ProbeExample {
                sentence: s.clone(),
                label,
            }
        })
        .collect();
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(ProbeError::DegenerateBins(empty));
    }
    ProbeDataset::split(ProbeTask::SentLen, bins.num_bins(), examples, seed)
}

/// Keeps sentences containing exactly one of the target words; the label is
/// that word's position in `targets`.
pub fn gen_wc(corpus: &[Sentence], targets: &[String], seed: u64) -> Result<ProbeDataset> {
    let task = ProbeTask::WordContent;
    if targets.len() < 2 {
        return Err(ProbeError::InvalidConfig("word content needs at least 2 target words".into()));
    }
    let position: HashMap<&str, usize> = targets.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut counts = vec![0usize; targets.len()];
    let mut examples = Vec::new();
    for s in corpus {
        let mut found: Vec<usize> = s.tokens().iter().filter_map(|t| position.get(t.as_str()).copied()).collect();
        found.sort_unstable();
        found.dedup();
        if let [label] = found[..] {
            counts[label] += 1;
            examples.push(ProbeExample {
                sentence: s.clone(),
                label,
            });
        }
    }
    if let Some(c) = counts.iter().position(|&c| c < MIN_CLASS_EXAMPLES) {
        return Err(ProbeError::InsufficientExamples {
            task,
            detail: format!("target '{}' has {} sentences", targets[c], counts[c]),
        });
    }
    ProbeDataset::split(task, targets.len(), examples, seed)
}

pub const DEFAULT_WC_TARGETS: usize = 10;
pub const DEFAULT_WC_FIRST_RANK: usize = 100;

/// `k` mid-frequency corpus tokens: frequency ranks 100..100+k, or a window
/// centred on the median rank when the corpus has fewer distinct tokens.
pub fn default_wc_targets(corpus: &[Sentence], k: usize) -> Result<Vec<String>> {
    let vocab = build_vocab(corpus, 1).map_err(|_| ProbeError::InsufficientExamples {
        task: ProbeTask::WordContent,
        detail: "empty corpus".into(),
    })?;
    let ranked = &vocab.tokens()[2..];
    if ranked.len() < k {
        return Err(ProbeError::InsufficientExamples {
            task: ProbeTask::WordContent,
            detail: format!("corpus has {} distinct tokens, need {k}", ranked.len()),
        });
    }
    let start = if ranked.len() >= DEFAULT_WC_FIRST_RANK + k {
        DEFAULT_WC_FIRST_RANK
    } else {
        (ranked.len() - k) / 2
    };
    Ok(ranked[start..start + k].to_vec())
}

/// Positions `t` with `tokens[t] != tokens[t + 1]`.
fn distinct_adjacent(s: &Sentence) -> Vec<usize> {
    let toks = s.tokens();
    (0..toks.len().saturating_sub(1)).filter(|&t| toks[t] != toks[t + 1]).collect()
}

/// Each eligible sentence appears once, either intact (class 0) or with one
/// random adjacent distinct pair inverted (class 1). Exactly half of the
/// sentences (rounded down) are inverted.
pub fn gen_bshift(corpus: &[Sentence], seed: u64) -> Result<ProbeDataset> {
    let task = ProbeTask::BigramShift;
    let eligible: Vec<&Sentence> = corpus
        .iter()
        .filter(|s| s.len() >= 3 && !distinct_adjacent(s).is_empty())
        .collect();
    if eligible.len() < 2 * MIN_CLASS_EXAMPLES {
        return Err(ProbeError::InsufficientExamples {
            task,
            detail: format!("{} eligible sentences", eligible.len()),
        });
    }
    let mut rng = seed::rng_for(seed, "bshift");
    let mut flips: Vec<bool> = (0..eligible.len()).map(|i| i < eligible.len() / 2).collect();
    flips.shuffle(&mut rng);
    let mut examples = Vec::with_capacity(eligible.len());
    for (s, flip) in eligible.into_iter().zip(flips) {
        let sentence = if flip {
            let candidates = distinct_adjacent(s);
            let t = candidates[rng.gen_range(0..candidates.len())];
            swap_positions(s, t, t + 1).expect("position in range")
        } else {
            s.clone()
        };
        examples.push(ProbeExample {
            sentence,
            label: usize::from(flip),
        });
    }
    ProbeDataset::split(task, 2, examples, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub l2_grid: Vec<f64>,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            l2_grid: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            max_iterations: 3000,
            tolerance: 1e-5,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l2_grid.is_empty() || self.l2_grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(ProbeError::InvalidConfig("L2 grid must be non-empty and strictly positive".into()));
        }
        if self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return Err(ProbeError::InvalidConfig("max_iterations and tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub l2: f64,
    pub valid_accuracy: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub test_accuracy: f64,
    pub chosen_l2: f64,
    pub num_classes: usize,
    /// Train, validation and test sizes.
    pub split_sizes: [usize; 3],
    pub valid_accuracy: f64,
    /// Whether the selected probe met the convergence tolerance.
    pub converged: bool,
    /// Test accuracy of always predicting the most frequent training class.
    pub majority_baseline: f64,
    pub grid: Vec<GridPoint>,
}

/// Standardizes columns with train statistics; constant columns are only
/// centred.
fn standardize(train: &mut [Vec<f64>], others: &mut [&mut Vec<Vec<f64>>]) {
    let Some(dim) = train.first().map(Vec::len) else { return };
    let n = train.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in train.iter() {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; dim];
    for x in train.iter() {
        for ((s, v), m) in sd.iter_mut().zip(x).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let sd: Vec<f64> = sd.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
    let apply = |rows: &mut [Vec<f64>]| {
        for x in rows {
            for ((v, m), s) in x.iter_mut().zip(&mean).zip(&sd) {
                *v = (*v - m) / s;
            }
        }
    };
    apply(train);
    for o in others {
        apply(o);
    }
}

fn features(split: &[ProbeExample], encodings: &HashMap<String, Vec<f64>>) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    split
        .iter()
        .map(|ex| {
            encodings
                .get(ex.sentence.id())
                .map(|z| (z.clone(), ex.label))
                .ok_or_else(|| ProbeError::MissingEncoding(ex.sentence.id().to_string()))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}

/// Fits one probe per grid value and reports the validation-selected one.
/// Ties in validation accuracy go to the smaller penalty.
pub fn train_probe(
    dataset: &ProbeDataset,
    encodings: &HashMap<String, Vec<f64>>,
    cfg: &ProbeConfig,
) -> Result<ProbeOutcome> {
    cfg.validate()?;
    let (mut xtr, ytr) = features(&dataset.train, encodings)?;
    let (mut xva, yva) = features(&dataset.valid, encodings)?;
    let (mut xte, yte) = features(&dataset.test, encodings)?;
    standardize(&mut xtr, &mut [&mut xva, &mut xte]);

    let opts = FitOptions {
        max_iterations: cfg.max_iterations,
        tolerance: cfg.tolerance,
    };
    let mut grid_values = cfg.l2_grid.clone();
    grid_values.sort_by(f64::total_cmp);
    let mut grid = Vec::with_capacity(grid_values.len());
    let mut best: Option<(f64, logreg::FitOutcome, f64)> = None;
    for &l2 in &grid_values {
        let fitted = fit(&xtr, &ytr, dataset.num_classes, l2, opts);
        let valid_accuracy = fitted.model.accuracy(&xva, &yva);
        grid.push(GridPoint {
            l2,
            valid_accuracy,
            converged: fitted.converged,
            iterations: fitted.iterations,
        });
        if best.as_ref().is_none_or(|(_, _, acc)| valid_accuracy > *acc) {
            best = Some((l2, fitted, valid_accuracy));
        }
    }
    let (chosen_l2, fitted, valid_accuracy) = best.expect("non-empty grid");

    let mut counts = vec![0usize; dataset.num_classes];
    for &y in &ytr {
        counts[y] += 1;
    }
    let majority = (0..dataset.num_classes).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0);
    let majority_baseline = yte.iter().filter(|&&y| y == majority).count() as f64 / yte.len() as f64;

    Ok(ProbeOutcome {
        test_accuracy: fitted.model.accuracy(&xte, &yte),
        chosen_l2,
        num_classes: dataset.num_classes,
        split_sizes: dataset.split_sizes(),
        valid_accuracy,
        converged: fitted.converged,
        majority_baseline,
        grid,
    })
}

/// Encodes every sentence of the dataset with the frozen model.
pub fn encode_dataset<T: Scalar>(model: &FakeDetector<T>, dataset: &ProbeDataset) -> Result<HashMap<String, Vec<f64>>> {
    const BATCH: usize = 256;
    let sentences: Vec<&Sentence> = dataset.all().map(|e| &e.sentence).collect();
    let mut out = HashMap::with_capacity(sentences.len());
    for chunk in sentences.chunks(BATCH) {
        let owned: Vec<Sentence> = chunk.iter().map(|s| (*s).clone()).collect();
        for (s, enc) in chunk.iter().zip(model.encode_batch(&owned)?) {
            out.insert(s.id().to_string(), enc.z.iter().map(|v| v.as_f64()).collect());
        }
    }
    Ok(out)
}

pub fn generate(task: ProbeTask, corpus: &[Sentence], seed: u64) -> Result<ProbeDataset> {
    match task {
        ProbeTask::SentLen => gen_sentlen(corpus, &LengthBins::quantiles(corpus, DEFAULT_SENTLEN_BINS), seed),
        ProbeTask::WordContent => gen_wc(corpus, &default_wc_targets(corpus, DEFAULT_WC_TARGETS)?, seed),
        ProbeTask::BigramShift => gen_bshift(corpus, seed),
    }
}

/// Generates each task with default settings and probes the model on it.
pub fn run_probes<T: Scalar>(
    model: &FakeDetector<T>,
    corpus: &[Sentence],
    tasks: &[ProbeTask],
    seed: u64,
    cfg: &ProbeConfig,
) -> Result<BTreeMap<ProbeTask, ProbeOutcome>> {
    let mut report = BTreeMap::new();
    for &task in tasks {
        let dataset = generate(task, corpus, seed)?;
        let encodings = encode_dataset(model, &dataset)?;
        report.insert(task, train_probe(&dataset, &encodings, cfg)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sent(id: usize, toks: &[&str]) -> Sentence {
        Sentence::new(id.to_string(), toks.iter().map(|t| t.to_string()).collect()).unwrap()
    }

    fn random_corpus(n: usize, seed: u64) -> Vec<Sentence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let len = rng.gen_range(3..15);
                let toks = (0..len).map(|_| format!("w{}", rng.gen_range(0..40))).collect();
                Sentence::new(i.to_string(), toks).unwrap()
            })
            .collect()
    }

    #[test]
    fn length_bins() {
        let bins = LengthBins::new(vec![3, 6]).unwrap();
        assert_eq!(bins.bin(2), 0);
        assert_eq!(bins.bin(7), 2);
        assert_eq!(bins.bin(3), 0);
        assert_eq!(bins.bin(4), 1);
        assert!(matches!(LengthBins::new(vec![3, 3]), Err(ProbeError::UnorderedBins)));
    }

    #[test]
    fn quantile_bins_are_balanced() {
        // 60 distinct lengths, 10 sentences each
        let corpus: Vec<Sentence> = (0..600)
            .map(|i| {
                let len = i % 60 + 1;
                Sentence::new(i.to_string(), vec!["x".to_string(); len]).unwrap()
            })
            .collect();
        let bins = LengthBins::quantiles(&corpus, 6);
        assert_eq!(bins.num_bins(), 6);
        let mut sorted: Vec<usize> = corpus.iter().map(|s| bins.bin(s.len())).collect();
        sorted.sort_unstable();
        for b in 0..6 {
            let count = sorted.iter().filter(|&&x| x == b).count();
            assert!(count.abs_diff(100) <= 1, "bin {b}: {count}");
        }
    }

    #[test]
    fn empty_bin_is_degenerate() {
        let corpus: Vec<Sentence> = (0..100).map(|i| sent(i, &["a", "b"])).collect();
        let bins = LengthBins::new(vec![1, 5]).unwrap();
        assert!(matches!(gen_sentlen(&corpus, &bins, 0), Err(ProbeError::DegenerateBins(0))));
    }

    #[test]
    fn wc_labels_and_exclusion() {
        let mut corpus = vec![sent(0, &["the", "cat", "sat"]), sent(1, &["cat", "and", "dog"])];
        for i in 2..200 {
            corpus.push(sent(i, if i % 2 == 0 { &["a", "cat"] } else { &["a", "dog", "dog"] }));
        }
        let targets = vec!["cat".to_string(), "dog".to_string()];
        let ds = gen_wc(&corpus, &targets, 3).unwrap();
        let all: Vec<&ProbeExample> = ds.all().collect();
        assert!(all.iter().all(|e| e.sentence.id() != "1"));
        let first = all.iter().find(|e| e.sentence.id() == "0").unwrap();
        assert_eq!(first.label, 0);
        // recount: sentences with exactly one distinct target
        let recount = |word: &str, other: &str| {
            corpus
                .iter()
                .filter(|s| s.tokens().iter().any(|t| t == word) && !s.tokens().iter().any(|t| t == other))
                .count()
        };
        assert_eq!(all.iter().filter(|e| e.label == 0).count(), recount("cat", "dog"));
        assert_eq!(all.iter().filter(|e| e.label == 1).count(), recount("dog", "cat"));
    }

    #[test]
    fn wc_requires_enough_examples() {
        let corpus = vec![sent(0, &["cat"]), sent(1, &["dog"])];
        let targets = vec!["cat".to_string(), "dog".to_string()];
        assert!(matches!(gen_wc(&corpus, &targets, 0), Err(ProbeError::InsufficientExamples { .. })));
    }

    #[test]
    fn bshift_flips_one_adjacent_pair() {
        let corpus = random_corpus(2000, 1);
        let ds = gen_bshift(&corpus, 5).unwrap();
        let by_id: HashMap<&str, &Sentence> = corpus.iter().map(|s| (s.id(), s)).collect();
        let mut flipped = 0;
        let mut total = 0;
        for ex in ds.all() {
            let orig = by_id[ex.sentence.id()];
            let diff: Vec<usize> = (0..orig.len()).filter(|&t| orig.tokens()[t] != ex.sentence.tokens()[t]).collect();
            if ex.label == 1 {
                assert_eq!(diff.len(), 2);
                assert_eq!(diff[1], diff[0] + 1);
                flipped += 1;
            } else {
                assert!(diff.is_empty());
            }
            total += 1;
        }
        let ratio = flipped as f64 / total as f64;
        assert!((ratio - 0.5).abs() <= 0.03, "{ratio}");
    }

    #[test]
    fn bshift_skips_sentences_without_distinct_pair() {
        let s = sent(0, &["a", "a", "a"]);
        assert!(distinct_adjacent(&s).is_empty());
        let example = sent(1, &["it", "shone", "in", "the", "light", "."]);
        assert_eq!(
            swap_positions(&example, 2, 3).unwrap().tokens(),
            &["it", "shone", "the", "in", "light", "."]
        );
    }

    #[test]
    fn splits_are_deterministic_and_disjoint() {
        let corpus = random_corpus(500, 2);
        let bins = LengthBins::quantiles(&corpus, 6);
        let a = gen_sentlen(&corpus, &bins, 9).unwrap();
        let b = gen_sentlen(&corpus, &bins, 9).unwrap();
        assert_eq!(a, b);
        let ids: std::collections::HashSet<&str> = a.all().map(|e| e.sentence.id()).collect();
        assert_eq!(ids.len(), 500);
        let [tr, va, te] = a.split_sizes();
        assert_eq!(tr + va + te, 500);
        assert!(tr > 350 && va > 25 && te > 25);
    }

    #[test]
    fn probe_picks_smallest_penalty_on_ties_and_separates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let examples: Vec<ProbeExample> = (0..400)
            .map(|i| ProbeExample {
                sentence: sent(i, &["x"]),
                label: i % 2,
            })
            .collect();
        let encodings: HashMap<String, Vec<f64>> = examples
            .iter()
            .map(|e| {
                let c = if e.label == 1 { 2.0 } else { -2.0 };
                (e.sentence.id().to_string(), vec![c + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            })
            .collect();
        let ds = ProbeDataset::split(ProbeTask::BigramShift, 2, examples, 1).unwrap();
        let out = train_probe(&ds, &encodings, &ProbeConfig::default()).unwrap();
        assert_eq!(out.test_accuracy, 1.0);
        assert_eq!(out.chosen_l2, 1e-4);
        assert_eq!(out.grid.len(), 5);
    }

    #[test]
    fn missing_encoding_is_an_error() {
        let examples: Vec<ProbeExample> = (0..100).map(|i| ProbeExample { sentence: sent(i, &["x"]), label: i % 2 }).collect();
        let ds = ProbeDataset::split(ProbeTask::BigramShift, 2, examples, 1).unwrap();
        assert!(matches!(
            train_probe(&ds, &HashMap::new(), &ProbeConfig::default()),
            Err(ProbeError::MissingEncoding(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(ProbeConfig { l2_grid: vec![], ..ProbeConfig::default() }.validate().is_err());
        assert!(ProbeConfig { l2_grid: vec![0.0], ..ProbeConfig::default() }.validate().is_err());
        assert!(ProbeConfig::default().validate().is_ok());
    }

    #[test]
    fn task_names_parse() {
        for t in [ProbeTask::SentLen, ProbeTask::WordContent, ProbeTask::BigramShift] {
            assert_eq!(t.to_string().parse::<ProbeTask>().unwrap(), t);
        }
        assert!("tense".parse::<ProbeTask>().is_err());
    }
}
