//! Fake sentence generation by word shuffle and word drop, and assembly of
//! the labeled real/fake dataset.
//!
//! Corruption positions are 0-based everywhere, including the `i`/`j`
//! fields of serialized dataset records.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;
use thiserror::Error;

use crate::corpus::{CorpusError, Sentence};
use crate::seed;

/// Index-pair draws attempted before falling back to enumerating the
/// distinct-token pairs.
pub const SHUFFLE_RESAMPLE_LIMIT: usize = 10;

#[derive(Debug, Error)]
pub enum FakeGenError {
    #[error("sentence {0} is too short to corrupt")]
    TooShort(String),
    #[error("sentence {0} has no pair of distinct tokens")]
    NoDistinctPair(String),
    #[error("no sentence in the corpus is eligible for corruption")]
    EmptyDataset,
    #[error("fakes_per_real must be at least 1")]
    InvalidFakesPerReal,
    #[error("position {index} out of range for sentence of length {len}")]
    BadPosition { index: usize, len: usize },
    #[error("dataset line {line}: {detail}")]
    MalformedRecord { line: usize, detail: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = FakeGenError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "shuffle")]
    WordShuffle,
    #[serde(rename = "drop")]
    WordDrop,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::WordShuffle => "shuffle",
            Strategy::WordDrop => "drop",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "shuffle" => Ok(Strategy::WordShuffle),
            "drop" => Ok(Strategy::WordDrop),
            other => Err(format!("unknown strategy '{other}' (expected shuffle or drop)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CorruptionRecord {
    pub strategy: Strategy,
    pub i: usize,
    /// Second swapped position; only for word shuffle.
    pub j: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Fake = 0,
    Real = 1,
}

impl Label {
    /// Class index used by the classifier.
    pub fn class(self) -> usize {
        self as usize
    }

    pub fn from_class(class: usize) -> Option<Label> {
        match class {
            0 => Some(Label::Fake),
            1 => Some(Label::Real),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub sentence: Sentence,
    pub label: Label,
    pub record: Option<CorruptionRecord>,
    pub source_id: String,
}

impl LabeledExample {
    pub fn real(sentence: Sentence) -> Self {
        let source_id = sentence.id().to_string();
        LabeledExample {
            sentence,
            label: Label::Real,
            record: None,
            source_id,
        }
    }

    pub fn fake(sentence: Sentence, record: CorruptionRecord, source_id: impl Into<String>) -> Self {
        LabeledExample {
            sentence,
            label: Label::Fake,
            record: Some(record),
            source_id: source_id.into(),
        }
    }
}

/// Swaps positions `i` and `j`.
pub fn swap_positions(s: &Sentence, i: usize, j: usize) -> Result<Sentence> {
    let n = s.len();
    for index in [i, j] {
        if index >= n {
            return Err(FakeGenError::BadPosition { index, len: n });
        }
    }
    let mut tokens = s.tokens().to_vec();
    tokens.swap(i, j);
    Ok(s.with_tokens(tokens))
}

/// Removes position `i`.
pub fn drop_position(s: &Sentence, i: usize) -> Result<Sentence> {
    let n = s.len();
    if i >= n {
        return Err(FakeGenError::BadPosition { index: i, len: n });
    }
    if n < 2 {
        return Err(FakeGenError::TooShort(s.id().to_string()));
    }
    let mut tokens = s.tokens().to_vec();
    tokens.remove(i);
    Ok(s.with_tokens(tokens))
}

fn check_shuffle_eligible(s: &Sentence) -> Result<()> {
    if s.len() < 2 {
        return Err(FakeGenError::TooShort(s.id().to_string()));
    }
    let first = &s.tokens()[0];
    if s.tokens().iter().all(|t| t == first) {
        return Err(FakeGenError::NoDistinctPair(s.id().to_string()));
    }
    Ok(())
}

/// Swaps two positions holding different tokens.
///
/// Draws uniform pairs `i ≠ j` up to [`SHUFFLE_RESAMPLE_LIMIT`] times; if
/// every draw lands on equal tokens, picks uniformly among all pairs of
/// distinct tokens so that an eligible sentence always yields a fake.
pub fn word_shuffle<R: Rng + ?Sized>(s: &Sentence, rng: &mut R) -> Result<(Sentence, CorruptionRecord)> {
    check_shuffle_eligible(s)?;
    let n = s.len();
    let toks = s.tokens();
    let mut pair = None;
    for _ in 0..SHUFFLE_RESAMPLE_LIMIT {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        if toks[i] != toks[j] {
            pair = Some((i, j));
            break;
        }
    }
    let (i, j) = match pair {
        Some(p) => p,
        None => {
            let distinct: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| i != j && toks[i] != toks[j])
                .collect();
            distinct[rng.gen_range(0..distinct.len())]
        }
    };
    let out = swap_positions(s, i, j)?;
    let record = CorruptionRecord {
        strategy: Strategy::WordShuffle,
        i,
        j: Some(j),
    };
    Ok((out, record))
}

/// Drops one uniformly chosen position.
pub fn word_drop<R: Rng + ?Sized>(s: &Sentence, rng: &mut R) -> Result<(Sentence, CorruptionRecord)> {
    if s.len() < 2 {
        return Err(FakeGenError::TooShort(s.id().to_string()));
    }
    let i = rng.gen_range(0..s.len());
    let record = CorruptionRecord {
        strategy: Strategy::WordDrop,
        i,
        j: None,
    };
    Ok((drop_position(s, i)?, record))
}

pub fn corrupt<R: Rng + ?Sized>(
    s: &Sentence,
    strategy: Strategy,
    rng: &mut R,
) -> Result<(Sentence, CorruptionRecord)> {
    match strategy {
        Strategy::WordShuffle => word_shuffle(s, rng),
        Strategy::WordDrop => word_drop(s, rng),
    }
}

pub fn is_eligible(s: &Sentence, strategy: Strategy) -> bool {
    match strategy {
        Strategy::WordShuffle => check_shuffle_eligible(s).is_ok(),
        Strategy::WordDrop => s.len() >= 2,
    }
}

/// Levenshtein distance over token sequences with unit costs.
pub fn word_edit_distance(a: &Sentence, b: &Sentence) -> usize {
    token_edit_distance(a.tokens(), b.tokens())
}

pub fn token_edit_distance<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Emits every eligible sentence as REAL followed by `fakes_per_real`
/// independent corruptions labeled FAKE. Ineligible sentences are left out
/// entirely. Each sentence draws from its own stream seeded by
/// `(seed, sentence id)`, so the output depends only on the inputs.
pub fn build_dataset<'a, I>(
    corpus: I,
    strategy: Strategy,
    fakes_per_real: usize,
    seed: u64,
) -> Result<Vec<LabeledExample>>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    if fakes_per_real == 0 {
        return Err(FakeGenError::InvalidFakesPerReal);
    }
    let mut out = Vec::new();
    for s in corpus {
        if !is_eligible(s, strategy) {
            continue;
        }
        let mut rng = seed::rng_for(seed, s.id());
        out.push(LabeledExample::real(s.clone()));
        for k in 1..=fakes_per_real {
            let (fake, record) = corrupt(s, strategy, &mut rng)?;
            let fake = fake.with_id(format!("{}/f{k}", s.id()));
            out.push(LabeledExample::fake(fake, record, s.id()));
        }
    }
    if out.is_empty() {
        return Err(FakeGenError::EmptyDataset);
    }
    Ok(out)
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetRecord {
    id: String,
    tokens: Vec<String>,
    label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    i: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    j: Option<usize>,
    source_id: String,
}

/// Writes one JSON object per line.
pub fn write_dataset<W: Write>(mut w: W, examples: &[LabeledExample]) -> Result<()> {
    for ex in examples {
        let rec = DatasetRecord {
            id: ex.sentence.id().to_string(),
            tokens: ex.sentence.tokens().to_vec(),
            label: ex.label.class() as u8,
            strategy: ex.record.map(|r| r.strategy),
            i: ex.record.map(|r| r.i),
            j: ex.record.and_then(|r| r.j),
            source_id: ex.source_id.clone(),
        };
        serde_json::to_writer(&mut w, &rec).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |detail: String| FakeGenError::MalformedRecord { line: n + 1, detail };
        let rec: DatasetRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let sentence = Sentence::new(rec.id, rec.tokens)?;
        let label = Label::from_class(rec.label as usize)
            .ok_or_else(|| malformed(format!("label {} is not 0 or 1", rec.label)))?;
        let record = match (label, rec.strategy, rec.i) {
            (Label::Real, None, None) => None,
            (Label::Fake, Some(strategy), Some(i)) => {
                if strategy == Strategy::WordShuffle && rec.j.is_none() {
                    return Err(malformed("shuffle record without j".into()));
                }
                Some(CorruptionRecord { strategy, i, j: rec.j })
            }
            _ => return Err(malformed("corruption fields must be present exactly for fakes".into())),
        };
        out.push(LabeledExample {
            sentence,
            label,
            record,
            source_id: rec.source_id,
        });
    }
    Ok(out)
}
