//! Tokenization, vocabulary construction and pretrained embedding ingestion.

use rand::Rng;
use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

use crate::numcore::{Scalar, Tensor};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Half-width of the uniform range for tokens without a pretrained vector.
pub const RANDOM_INIT_RANGE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line contains no tokens")]
    EmptyLine,
    #[error("invalid sentence {id}: {reason}")]
    InvalidSentence { id: String, reason: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("embedding line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("malformed line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Ordered, non-empty sequence of whitespace-free tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    id: String,
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, tokens: Vec<String>) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: &str| CorpusError::InvalidSentence {
            id: id.clone(),
            reason: reason.to_string(),
        };
        if tokens.is_empty() {
            return Err(invalid("no tokens"));
        }
        if tokens.iter().any(|t| t.is_empty()) {
            return Err(invalid("empty token"));
        }
        if tokens.iter().any(|t| t.chars().any(char::is_whitespace)) {
            return Err(invalid("token contains whitespace"));
        }
        Ok(Sentence { id, tokens })
    }

    /// Tokenizes `line` into a sentence with the given id.
    pub fn parse(id: impl Into<String>, line: &str) -> Result<Self> {
        Ok(Sentence {
            id: id.into(),
            tokens: tokenize(line)?,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    /// Same tokens under a different id.
    pub fn with_id(&self, id: impl Into<String>) -> Sentence {
        Sentence {
            id: id.into(),
            tokens: self.tokens.clone(),
        }
    }

    /// Same id, replacement tokens. Caller upholds the token invariants.
    pub(crate) fn with_tokens(&self, tokens: Vec<String>) -> Sentence {
        debug_assert!(!tokens.is_empty());
        Sentence {
            id: self.id.clone(),
            tokens,
        }
    }
}

/// Whitespace split and lower-case.
pub fn tokenize(line: &str) -> Result<Vec<String>> {
    let tokens: Vec<String> = line.split_whitespace().map(str::to_lowercase).collect();
    if tokens.is_empty() {
        return Err(CorpusError::EmptyLine);
    }
    Ok(tokens)
}

/// Reads one sentence per line; blank lines are skipped. Sentence ids are
/// the 1-based line numbers.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        match Sentence::parse((n + 1).to_string(), &line) {
            Ok(s) => out.push(s),
            Err(CorpusError::EmptyLine) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn read_corpus_file(path: &Path) -> Result<Vec<Sentence>> {
    read_corpus(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens listed in index order, starting at 2.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        all.extend(tokens.into_iter().map(Into::into));
        let index = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens: all, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    /// Tokens in index order, including the reserved entries.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, sentence: &Sentence) -> Vec<usize> {
        sentence.tokens().iter().map(|t| self.index(t)).collect()
    }

    /// Writes `token<TAB>index` lines in index order.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(w, "{t}\t{i}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let malformed = |detail: String| CorpusError::MalformedLine { line: n + 1, detail };
            let (token, idx) = line
                .split_once('\t')
                .ok_or_else(|| malformed("missing tab".into()))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|e| malformed(format!("bad index: {e}")))?;
            if idx != n {
                return Err(malformed(format!("index {idx} out of order")));
            }
            tokens.push(token.to_string());
        }
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(CorpusError::MalformedLine {
                line: 1,
                detail: "reserved entries missing".into(),
            });
        }
        Ok(Vocabulary::from_tokens(tokens.into_iter().skip(2)))
    }
}

/// Counts tokens and keeps those seen at least `min_count` times, ordered by
/// descending frequency with ties broken lexicographically.
pub fn build_vocab<'a, I>(corpus: I, min_count: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut any = false;
    for s in corpus {
        any = true;
        for t in s.tokens() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    if !any {
        return Err(CorpusError::EmptyCorpus);
    }
    let min_count = min_count.max(1);
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_count && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t)))
}

/// `V × d` word vectors aligned with a [`Vocabulary`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    matrix: Tensor<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coverage {
    /// Non-reserved vocabulary tokens that had a pretrained vector.
    pub found: usize,
    /// Non-reserved vocabulary tokens.
    pub total: usize,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.found as f64 / self.total as f64
        }
    }
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn from_matrix(matrix: Tensor<T>) -> Self {
        assert!(matrix.is_matrix());
        EmbeddingTable { matrix }
    }

    /// Every row except PAD drawn from uniform(−0.1, 0.1).
    pub fn random<R: Rng + ?Sized>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        let mut matrix = Tensor::zeros(&[vocab_size, dim]);
        fill_random_rows(&mut matrix, 1..vocab_size, rng);
        EmbeddingTable { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn row(&self, index: usize) -> &[T] {
        self.matrix.row(index)
    }

    pub fn matrix(&self) -> &Tensor<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Tensor<T> {
        self.matrix
    }
}

fn fill_random_rows<T: Scalar, R: Rng + ?Sized>(
    matrix: &mut Tensor<T>,
    rows: impl IntoIterator<Item = usize>,
    rng: &mut R,
) {
    let dim = matrix.cols();
    for r in rows {
        for v in &mut matrix.data_mut()[r * dim..(r + 1) * dim] {
            *v = T::of(rng.gen_range(-RANDOM_INIT_RANGE..RANDOM_INIT_RANGE));
        }
    }
}

/// Reads `token v1 … vd` lines and aligns them with `vocab`.
///
/// Tokens missing from the file, UNK included, get uniform(−0.1, 0.1)
/// vectors drawn from `rng` in index order; PAD stays zero. Lines for
/// tokens outside the vocabulary are still validated.
pub fn load_embeddings<T, R, B>(
    reader: B,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<(EmbeddingTable<T>, Coverage)>
where
    T: Scalar,
    R: Rng + ?Sized,
    B: BufRead,
{
    let mut dim: Option<usize> = None;
    let mut rows: HashMap<usize, Vec<T>> = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values = fields
            .map(|f| {
                f.parse::<T>().map_err(|_| CorpusError::MalformedLine {
                    line: n + 1,
                    detail: format!("non-numeric field '{f}'"),
                })
            })
            .collect::<Result<Vec<T>>>()?;
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected || expected == 0 {
            return Err(CorpusError::DimensionMismatch {
                line: n + 1,
                expected,
                found: values.len(),
            });
        }
        if let Some(&idx) = vocab.index.get(token) {
            if idx != PAD {
                rows.entry(idx).or_insert(values);
            }
        }
    }
    let dim = dim.ok_or(CorpusError::EmptyCorpus)?;
    let mut matrix = Tensor::zeros(&[vocab.len(), dim]);
    for (&idx, values) in &rows {
        matrix.data_mut()[idx * dim..(idx + 1) * dim].copy_from_slice(values);
    }
    let missing = (UNK..vocab.len()).filter(|i| !rows.contains_key(i));
    fill_random_rows(&mut matrix, missing, rng);
    let coverage = Coverage {
        found: rows.keys().filter(|&&i| i > UNK).count(),
        total: vocab.len() - 2,
    };
    Ok((EmbeddingTable { matrix }, coverage))
}

pub fn load_embeddings_file<T: Scalar, R: Rng + ?Sized>(
    path: &Path,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<(EmbeddingTable<T>, Coverage)> {
    load_embeddings(BufReader::new(File::open(path)?), vocab, rng)
}

pub fn write_vocab_file(vocab: &Vocabulary, path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    vocab.write_tsv(&mut w)?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn sent(id: &str, toks: &[&str]) -> Sentence {
        Sentence::new(id, toks.iter().map(|t| t.to_string()).collect()).unwrap()
    }

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(
            tokenize("It shone in the light .").unwrap(),
            vec!["it", "shone", "in", "the", "light", "."]
        );
        assert_eq!(tokenize("a").unwrap(), vec!["a"]);
        assert!(matches!(tokenize("   "), Err(CorpusError::EmptyLine)));
    }

    #[test]
    fn sentence_rejects_bad_tokens() {
        assert!(Sentence::new("1", vec![]).is_err());
        assert!(Sentence::new("1", vec!["".into()]).is_err());
        assert!(Sentence::new("1", vec!["a b".into()]).is_err());
    }

    #[test]
    fn read_corpus_skips_blank_lines_and_numbers_by_line() {
        let text = "The cat\n\n  \nsat down\n";
        let corpus = read_corpus(text.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus[0].id(), "1");
        assert_eq!(corpus[1].id(), "4");
        assert_eq!(corpus[1].tokens(), &["sat", "down"]);
    }

    #[test]
    fn vocab_orders_by_frequency() {
        let corpus = [sent("1", &["a", "b"]), sent("2", &["a"])];
        let v = build_vocab(&corpus, 1).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a", "b"]);
        assert_eq!(v.index("a"), 2);
        let v = build_vocab(&corpus, 2).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a"]);
        assert_eq!(v.index("b"), UNK);
    }

    #[test]
    fn vocab_ties_break_lexicographically() {
        let corpus = [sent("1", &["z", "m", "a"])];
        let v = build_vocab(&corpus, 1).unwrap();
        assert_eq!(&v.tokens()[2..], &["a", "m", "z"]);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let corpus: [Sentence; 0] = [];
        assert!(matches!(build_vocab(&corpus, 1), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn vocab_size_matches_distinct_token_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let alphabet: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
        let mut corpus: Vec<Sentence> = (0..1000)
            .map(|i| {
                let n = rng.gen_range(1..10);
                let toks = (0..n)
                    .map(|_| alphabet[rng.gen_range(0..alphabet.len())].clone())
                    .collect();
                Sentence::new(i.to_string(), toks).unwrap()
            })
            .collect();
        // make sure every alphabet token occurs
        corpus.push(Sentence::new("all", alphabet.clone()).unwrap());
        let distinct: HashSet<&String> = corpus.iter().flat_map(|s| s.tokens()).collect();
        let v = build_vocab(&corpus, 1).unwrap();
        assert_eq!(distinct.len(), 50);
        assert_eq!(v.len(), distinct.len() + 2);
        assert_eq!(v.len(), 52);
    }

    #[test]
    fn vocab_tsv_round_trip() {
        let v = Vocabulary::from_tokens(["the", "cat"]);
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "<pad>\t0\n<unk>\t1\nthe\t2\ncat\t3\n");
        assert_eq!(Vocabulary::read_tsv(buf.as_slice()).unwrap(), v);
    }

    #[test]
    fn embeddings_copy_rows_and_keep_pad_zero() {
        let vocab = Vocabulary::from_tokens(["a"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (table, cov) = load_embeddings::<f64, _, _>("a 1.0 2.0\n".as_bytes(), &vocab, &mut rng).unwrap();
        assert_eq!(table.row(2), &[1.0, 2.0]);
        assert_eq!(table.row(PAD), &[0.0, 0.0]);
        assert!(table.row(UNK).iter().all(|v| v.abs() < 0.1 && *v != 0.0));
        assert_eq!(cov, Coverage { found: 1, total: 1 });
    }

    #[test]
    fn ragged_embedding_file_is_rejected() {
        let vocab = Vocabulary::from_tokens(["a", "b"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = load_embeddings::<f64, _, _>("a 1.0\nb 2.0 3.0\n".as_bytes(), &vocab, &mut rng).unwrap_err();
        assert!(matches!(err, CorpusError::DimensionMismatch { line: 2, expected: 1, found: 2 }));
        let err = load_embeddings::<f64, _, _>("a 1.0 x\n".as_bytes(), &vocab, &mut rng).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn coverage_matches_set_intersection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vocab_tokens: Vec<String> = (0..80).map(|i| format!("v{i}")).collect();
        let file_tokens: Vec<String> = (0..120)
            .filter(|_| rng.gen_bool(0.5))
            .map(|i| format!("v{i}"))
            .collect();
        let vocab = Vocabulary::from_tokens(vocab_tokens.iter().cloned());
        let file: String = file_tokens.iter().map(|t| format!("{t} 0.5 -0.5 1.5\n")).collect();
        let (_, cov) = load_embeddings::<f32, _, _>(file.as_bytes(), &vocab, &mut rng).unwrap();

        let a: HashSet<&String> = vocab_tokens.iter().collect();
        let b: HashSet<&String> = file_tokens.iter().collect();
        assert_eq!(cov.found, a.intersection(&b).count());
        assert_eq!(cov.total, 80);
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(line in "[ a-zA-Z.,]{0,40}") {
            if let Ok(tokens) = tokenize(&line) {
                prop_assert_eq!(tokenize(&tokens.join(" ")).unwrap(), tokens);
            }
        }

        #[test]
        fn unknown_tokens_map_to_unk(words in proptest::collection::vec("[a-z]{1,5}", 1..20), probe in "[A-Z]{1,4}") {
            let s = Sentence::new("p", words).unwrap();
            let v1 = build_vocab([&s], 1).unwrap();
            let v2 = build_vocab([&s], 1).unwrap();
            prop_assert_eq!(&v1, &v2);
            // upper-case strings never appear in a lower-case corpus
            prop_assert_eq!(v1.index(&probe), UNK);
        }
    }
}
