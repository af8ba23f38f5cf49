//! Monolingual and parallel corpora, oracle toy languages, and their on-disk
//! format.
//!
//! Corpus files are UTF-8, one record per line: `source \t target \t origin`,
//! preceded by a single header line carrying the language tag and the seed.
//! Backslash, tab, CR and LF are escaped inside fields.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const HEADER_TAG: &str = "#distill-mt-corpus";
const FORMAT_VERSION: &str = "v1";

/// A validated sentence: non-empty after trimming, no control characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Sentence(String);

impl Sentence {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Input("sentence is empty".into()));
        }
        if let Some(c) = text.chars().find(|c| c.is_control()) {
            return Err(Error::Input(format!(
                "sentence contains control character {c:?}"
            )));
        }
        Ok(Sentence(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.0.split_whitespace()
    }
}

impl TryFrom<String> for Sentence {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Sentence::new(s)
    }
}

impl From<Sentence> for String {
    fn from(s: Sentence) -> String {
        s.0
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Sentence {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Where a pair came from. `Synthetic(i)` pairs belong to the synthetic
/// corpus generated in cycle `i`, counted from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Human,
    Synthetic(u32),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Human => f.write_str("human"),
            Origin::Synthetic(i) => write!(f, "synthetic:{i}"),
        }
    }
}

impl FromStr for Origin {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "human" {
            return Ok(Origin::Human);
        }
        s.strip_prefix("synthetic:")
            .and_then(|n| n.parse().ok())
            .map(Origin::Synthetic)
            .ok_or_else(|| format!("unknown origin {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParallelPair {
    pub source: Sentence,
    pub target: Sentence,
    pub origin: Origin,
}

impl ParallelPair {
    pub fn human(source: Sentence, target: Sentence) -> Self {
        ParallelPair {
            source,
            target,
            origin: Origin::Human,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pairs: Vec<ParallelPair>,
    language_tag: String,
    seed: u64,
}

impl Corpus {
    pub fn new(pairs: Vec<ParallelPair>, language_tag: impl Into<String>, seed: u64) -> Result<Self> {
        let language_tag = language_tag.into();
        if language_tag.trim().is_empty() {
            return Err(Error::Config("language tag must be non-empty".into()));
        }
        if language_tag.chars().any(|c| c.is_control()) {
            return Err(Error::Config("language tag contains control characters".into()));
        }
        Ok(Corpus {
            pairs,
            language_tag,
            seed,
        })
    }

    pub fn pairs(&self) -> &[ParallelPair] {
        &self.pairs
    }

    pub fn into_pairs(self) -> Vec<ParallelPair> {
        self.pairs
    }

    pub fn language_tag(&self) -> &str {
        &self.language_tag
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> Vec<Sentence> {
        self.pairs.iter().map(|p| p.source.clone()).collect()
    }

    fn with_pairs(&self, pairs: Vec<ParallelPair>, seed: u64) -> Corpus {
        Corpus {
            pairs,
            language_tag: self.language_tag.clone(),
            seed,
        }
    }
}

// ---------------------------------------------------------------------------
// Toy languages
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyKind {
    SubstitutionCipher,
    WordReversal,
    NumberToWords,
}

fn default_max_word_len() -> usize {
    3
}

/// Parameters of an oracle toy language.
///
/// Words are strings of `1..=max_word_len` alphabet symbols; sentences hold
/// `1..=max_sentence_len` words, both lengths drawn uniformly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyLanguageSpec {
    pub kind: ToyKind,
    pub alphabet: Vec<char>,
    pub max_sentence_len: usize,
    #[serde(default = "default_max_word_len")]
    pub max_word_len: usize,
    /// Explicit cipher image of `alphabet`, position by position. Drawn from
    /// the seed when absent. Only meaningful for `SubstitutionCipher`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cipher: Option<Vec<char>>,
    pub seed: u64,
}

impl ToyLanguageSpec {
    pub fn new(kind: ToyKind, alphabet: &str, max_sentence_len: usize, seed: u64) -> Self {
        ToyLanguageSpec {
            kind,
            alphabet: alphabet.chars().collect(),
            max_sentence_len,
            max_word_len: default_max_word_len(),
            cipher: None,
            seed,
        }
    }

    pub fn language_tag(&self) -> String {
        match self.kind {
            ToyKind::SubstitutionCipher => "toy-cipher",
            ToyKind::WordReversal => "toy-reversal",
            ToyKind::NumberToWords => "toy-numbers",
        }
        .to_string()
    }

    pub fn validate(&self) -> Result<()> {
        let distinct: HashSet<char> = self.alphabet.iter().copied().collect();
        if self.alphabet.is_empty() {
            return Err(Error::Config("alphabet is empty".into()));
        }
        if distinct.len() != self.alphabet.len() {
            return Err(Error::Config("alphabet contains duplicate symbols".into()));
        }
        if distinct.len() < 2 {
            return Err(Error::Config("alphabet needs at least 2 distinct symbols".into()));
        }
        if let Some(c) = self
            .alphabet
            .iter()
            .find(|c| c.is_whitespace() || c.is_control())
        {
            return Err(Error::Config(format!("alphabet symbol {c:?} is not printable")));
        }
        if self.max_sentence_len == 0 || self.max_word_len == 0 {
            return Err(Error::Config("sentence and word lengths must be positive".into()));
        }
        if self.kind == ToyKind::NumberToWords && !self.alphabet.iter().all(|c| c.is_ascii_digit()) {
            return Err(Error::Config("number-to-words alphabet must be ASCII digits".into()));
        }
        if let Some(cipher) = &self.cipher {
            let image: HashSet<char> = cipher.iter().copied().collect();
            if cipher.len() != self.alphabet.len() || image.len() != cipher.len() || image != distinct {
                return Err(Error::Config(
                    "cipher is not a bijection over the alphabet".into(),
                ));
            }
        }
        Ok(())
    }

    /// Number of distinct sentences this spec can produce, saturating.
    pub fn capacity(&self) -> u128 {
        let a = self.alphabet.len() as u128;
        let mut words: u128 = 0;
        let mut pow: u128 = 1;
        for _ in 0..self.max_word_len {
            pow = pow.saturating_mul(a);
            words = words.saturating_add(pow);
        }
        let mut total: u128 = 0;
        let mut pow: u128 = 1;
        for _ in 0..self.max_sentence_len {
            pow = pow.saturating_mul(words);
            total = total.saturating_add(pow);
        }
        total
    }
}

/// Exact reference translator for a toy language.
#[derive(Debug, Clone)]
pub struct Oracle {
    kind: ToyKind,
    cipher: HashMap<char, char>,
}

const DIGIT_WORDS: [&str; 10] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

impl Oracle {
    /// The translator for `spec`. A cipher not given explicitly is drawn
    /// from the spec seed.
    pub fn new(spec: &ToyLanguageSpec) -> Result<Self> {
        spec.validate()?;
        let cipher = match spec.kind {
            ToyKind::SubstitutionCipher => {
                let image = match &spec.cipher {
                    Some(c) => c.clone(),
                    None => {
                        let mut image = spec.alphabet.clone();
                        image.shuffle(&mut rng::stream(spec.seed, "toy/cipher"));
                        image
                    }
                };
                spec.alphabet.iter().copied().zip(image).collect()
            }
            _ => HashMap::new(),
        };
        Ok(Oracle { kind: spec.kind, cipher })
    }

    pub fn kind(&self) -> ToyKind {
        self.kind
    }

    /// Translate `s`. Total: symbols outside the toy alphabet pass through.
    pub fn translate(&self, s: &Sentence) -> Sentence {
        let text = match self.kind {
            ToyKind::WordReversal => {
                let mut words: Vec<&str> = s.words().collect();
                words.reverse();
                words.join(" ")
            }
            ToyKind::SubstitutionCipher => s
                .as_str()
                .chars()
                .map(|c| self.cipher.get(&c).copied().unwrap_or(c))
                .collect(),
            ToyKind::NumberToWords => s
                .words()
                .flat_map(|w| {
                    w.chars().map(|c| match c.to_digit(10) {
                        Some(d) => DIGIT_WORDS[d as usize].to_string(),
                        None => c.to_string(),
                    })
                })
                .collect::<Vec<_>>()
                .join(" "),
        };
        Sentence(text)
    }

    pub fn reference_corpus(&self, sources: &[Sentence], language_tag: &str, seed: u64) -> Result<Corpus> {
        let pairs = sources
            .iter()
            .map(|s| ParallelPair::human(s.clone(), self.translate(s)))
            .collect();
        Corpus::new(pairs, language_tag, seed)
    }
}

/// Output of [`gen_toy_corpus`].
#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub spec: ToyLanguageSpec,
    pub monolingual: Vec<Sentence>,
    pub oracle: Oracle,
}

impl ToyCorpus {
    /// The monolingual side paired with oracle translations, tagged human.
    pub fn parallel(&self) -> Corpus {
        self.oracle
            .reference_corpus(&self.monolingual, &self.spec.language_tag(), self.spec.seed)
            .expect("toy language tags are non-empty")
    }
}

/// Generate `size` distinct source sentences and the oracle translator.
pub fn gen_toy_corpus(spec: &ToyLanguageSpec, size: usize) -> Result<ToyCorpus> {
    spec.validate()?;
    if size == 0 {
        return Err(Error::Config("corpus size must be at least 1".into()));
    }
    if spec.capacity() < size as u128 {
        return Err(Error::Config(format!(
            "toy language admits only {} distinct sentences, {size} requested",
            spec.capacity()
        )));
    }

    let mut rng = rng::stream(spec.seed, "toy/sentences");
    let mut seen = HashSet::with_capacity(size);
    let mut monolingual = Vec::with_capacity(size);
    let max_attempts = size.saturating_mul(1000).saturating_add(10_000);
    let mut attempts = 0usize;
    while monolingual.len() < size {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Config(format!(
                "could not draw {size} distinct sentences; enlarge the alphabet or lengths"
            )));
        }
        let n_words = rng.gen_range(1..=spec.max_sentence_len);
        let words: Vec<String> = (0..n_words)
            .map(|_| {
                let len = rng.gen_range(1..=spec.max_word_len);
                (0..len)
                    .map(|_| spec.alphabet[rng.gen_range(0..spec.alphabet.len())])
                    .collect()
            })
            .collect();
        let text = words.join(" ");
        if seen.insert(text.clone()) {
            monolingual.push(Sentence(text));
        }
    }

    Ok(ToyCorpus {
        spec: spec.clone(),
        monolingual,
        oracle: Oracle::new(spec)?,
    })
}

// ---------------------------------------------------------------------------
// Sampling and splitting
// ---------------------------------------------------------------------------

/// Draw `n` pairs without replacement. Identical seeds give identical samples.
pub fn sample(corpus: &Corpus, n: usize, seed: u64) -> Result<Corpus> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    if n > corpus.len() {
        return Err(Error::Size {
            requested: n,
            available: corpus.len(),
        });
    }
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    let (chosen, _) = idx.partial_shuffle(&mut rng::stream(seed, "corpus/sample"), n);
    let pairs = chosen.iter().map(|&i| corpus.pairs[i].clone()).collect();
    Ok(corpus.with_pairs(pairs, seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, dev: f64, test: f64) -> Self {
        SplitRatios { train, dev, test }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

/// Shuffle with `seed` and cut into train/dev/test. Dev and test sizes are
/// floored; the remainder goes to train.
pub fn split(corpus: &Corpus, ratios: SplitRatios, seed: u64) -> Result<Splits> {
    let SplitRatios { train, dev, test } = ratios;
    if [train, dev, test].iter().any(|r| !r.is_finite() || *r <= 0.0) {
        return Err(Error::Config("split ratios must all be positive".into()));
    }
    if ((train + dev + test) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios sum to {}, expected 1",
            train + dev + test
        )));
    }
    let n = corpus.len();
    // Guard against products like 0.29 * 100 = 28.999999999999996.
    let n_dev = (n as f64 * dev + 1e-9).floor() as usize;
    let n_test = (n as f64 * test + 1e-9).floor() as usize;
    let n_train = n - n_dev - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "corpus/split"));
    let take = |range: std::ops::Range<usize>| -> Vec<ParallelPair> {
        order[range].iter().map(|&i| corpus.pairs[i].clone()).collect()
    };
    Ok(Splits {
        train: corpus.with_pairs(take(0..n_train), seed),
        dev: corpus.with_pairs(take(n_train..n_train + n_dev), seed),
        test: corpus.with_pairs(take(n_train + n_dev..n), seed),
    })
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub(crate) fn unescape(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => return Err(format!("unknown escape \\{other}")),
            None => return Err("dangling escape".into()),
        }
    }
    Ok(out)
}

/// Write `corpus` to `path`. Human and synthetic pairs may not share a file.
pub fn save(corpus: &Corpus, path: &Path) -> Result<()> {
    let human = corpus.pairs.iter().any(|p| p.origin == Origin::Human);
    let synthetic = corpus.pairs.iter().any(|p| p.origin != Origin::Human);
    if human && synthetic {
        return Err(Error::Input(
            "refusing to write human and synthetic pairs to one file".into(),
        ));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(format!("writing {}", path.display()), e);
    writeln!(
        w,
        "{HEADER_TAG}\t{FORMAT_VERSION}\t{}\t{}",
        escape(&corpus.language_tag),
        corpus.seed
    )
    .map_err(io)?;
    for p in &corpus.pairs {
        writeln!(
            w,
            "{}\t{}\t{}",
            escape(p.source.as_str()),
            escape(p.target.as_str()),
            p.origin
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load(path: &Path) -> Result<Corpus> {
    let file = fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::io(format!("reading {}", path.display()), e))?,
        None => return Err(parse_err(1, "missing header".into())),
    };
    let fields: Vec<&str> = header.split('\t').collect();
    if fields.len() != 4 || fields[0] != HEADER_TAG {
        return Err(parse_err(1, "malformed header".into()));
    }
    if fields[1] != FORMAT_VERSION {
        return Err(parse_err(1, format!("unsupported version {}", fields[1])));
    }
    let tag = unescape(fields[2]).map_err(|m| parse_err(1, m))?;
    let seed: u64 = fields[3]
        .parse()
        .map_err(|_| parse_err(1, format!("bad seed {:?}", fields[3])))?;

    let mut pairs = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let sentence = |f: &str| -> Result<Sentence> {
            let text = unescape(f).map_err(|m| parse_err(lineno, m))?;
            Sentence::new(text).map_err(|e| parse_err(lineno, e.to_string()))
        };
        let origin = fields[2].parse().map_err(|m| parse_err(lineno, m))?;
        pairs.push(ParallelPair {
            source: sentence(fields[0])?,
            target: sentence(fields[1])?,
            origin,
        });
    }
    Corpus::new(pairs, tag, seed).map_err(|e| parse_err(1, e.to_string()))
}

/// Sidecar describing how a corpus file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub language_tag: String,
    pub seed: u64,
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ToyLanguageSpec>,
}

pub fn manifest_path(corpus_path: &Path) -> PathBuf {
    let mut name = corpus_path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn write_manifest(corpus_path: &Path, manifest: &CorpusManifest) -> Result<()> {
    let path = manifest_path(corpus_path);
    let body = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, body + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_manifest(corpus_path: &Path) -> Result<CorpusManifest> {
    let path = manifest_path(corpus_path);
    let body = fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(serde_json::from_str(&body)?)
}

/// Plain one-sentence-per-line file.
pub fn save_lines(sentences: &[Sentence], path: &Path) -> Result<()> {
    let mut body = String::new();
    for s in sentences {
        body.push_str(s.as_str());
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_lines(path: &Path) -> Result<Vec<Sentence>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    body.lines()
        .enumerate()
        .map(|(i, l)| {
            Sentence::new(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(t: &str) -> Sentence {
        Sentence::new(t).unwrap()
    }

    fn numbered(n: usize) -> Corpus {
        let pairs = (0..n)
            .map(|i| ParallelPair::human(s(&format!("src {i}")), s(&format!("tgt {i}"))))
            .collect();
        Corpus::new(pairs, "test", 0).unwrap()
    }

    #[test]
    fn sentence_validation() {
        assert!(Sentence::new("   ").is_err());
        assert!(Sentence::new("a\tb").is_err());
        assert!(Sentence::new(" ok ").is_ok());
    }

    #[test]
    fn word_reversal_oracle() {
        let spec = ToyLanguageSpec::new(ToyKind::WordReversal, "abcd", 3, 1);
        let toy = gen_toy_corpus(&spec, 5).unwrap();
        assert_eq!(toy.oracle.translate(&s("ab cd")).as_str(), "cd ab");
    }

    #[test]
    fn identity_cipher_is_identity() {
        let mut spec = ToyLanguageSpec::new(ToyKind::SubstitutionCipher, "abc", 3, 1);
        spec.cipher = Some(vec!['a', 'b', 'c']);
        let toy = gen_toy_corpus(&spec, 5).unwrap();
        assert_eq!(toy.oracle.translate(&s("abc")).as_str(), "abc");
    }

    #[test]
    fn invalid_specs_are_config_errors() {
        let empty = ToyLanguageSpec::new(ToyKind::WordReversal, "", 3, 1);
        assert!(matches!(gen_toy_corpus(&empty, 5), Err(Error::Config(_))));
        let single = ToyLanguageSpec::new(ToyKind::WordReversal, "a", 3, 1);
        assert!(matches!(gen_toy_corpus(&single, 5), Err(Error::Config(_))));
        let mut bad = ToyLanguageSpec::new(ToyKind::SubstitutionCipher, "abc", 3, 1);
        bad.cipher = Some(vec!['a', 'a', 'c']);
        assert!(matches!(gen_toy_corpus(&bad, 5), Err(Error::Config(_))));
        let ok = ToyLanguageSpec::new(ToyKind::WordReversal, "ab", 1, 1);
        assert!(matches!(gen_toy_corpus(&ok, 0), Err(Error::Config(_))));
        // "ab" with 1-word sentences of up to 3 symbols admits 14 sentences.
        assert_eq!(ok.capacity(), 14);
        assert!(matches!(gen_toy_corpus(&ok, 15), Err(Error::Config(_))));
        assert_eq!(gen_toy_corpus(&ok, 14).unwrap().monolingual.len(), 14);
    }

    #[test]
    fn generated_sentences_are_distinct_and_bounded() {
        let spec = ToyLanguageSpec::new(ToyKind::NumberToWords, "0123456789", 4, 3);
        let toy = gen_toy_corpus(&spec, 300).unwrap();
        let distinct: HashSet<_> = toy.monolingual.iter().collect();
        assert_eq!(distinct.len(), 300);
        for sent in &toy.monolingual {
            let n = sent.words().count();
            assert!((1..=4).contains(&n));
            assert!(sent.words().all(|w| (1..=3).contains(&w.chars().count())));
        }
    }

    #[test]
    fn split_sizes_follow_floor_then_remainder() {
        let c = numbered(10);
        let sp = split(&c, SplitRatios::new(0.8, 0.1, 0.1), 4).unwrap();
        assert_eq!((sp.train.len(), sp.dev.len(), sp.test.len()), (8, 1, 1));
        let third = 1.0 / 3.0;
        let sp = split(&c, SplitRatios::new(third, third, third), 4).unwrap();
        assert_eq!((sp.train.len(), sp.dev.len(), sp.test.len()), (4, 3, 3));
        assert_eq!(sp, split(&c, SplitRatios::new(third, third, third), 4).unwrap());

        let mut all: Vec<_> = sp
            .train
            .pairs()
            .iter()
            .chain(sp.dev.pairs())
            .chain(sp.test.pairs())
            .cloned()
            .collect();
        all.sort_by(|a, b| a.source.cmp(&b.source));
        let mut orig = c.pairs().to_vec();
        orig.sort_by(|a, b| a.source.cmp(&b.source));
        assert_eq!(all, orig);
    }

    #[test]
    fn degenerate_split_ratios() {
        let c = numbered(10);
        assert!(matches!(split(&c, SplitRatios::new(1.0, 0.0, 0.0), 0), Err(Error::Config(_))));
        assert!(matches!(split(&c, SplitRatios::new(0.5, 0.3, 0.3), 0), Err(Error::Config(_))));
    }

    #[test]
    fn sample_errors_and_full_permutation() {
        let c = numbered(20);
        assert!(matches!(sample(&c, 21, 0), Err(Error::Size { .. })));
        let full = sample(&c, 20, 9).unwrap();
        let a: HashSet<_> = full.pairs().iter().collect();
        let b: HashSet<_> = c.pairs().iter().collect();
        assert_eq!(a, b);
        assert_eq!(sample(&c, 1, 5).unwrap(), sample(&c, 1, 5).unwrap());
    }

    #[test]
    fn escaping_roundtrips() {
        for text in ["plain", "back\\slash", "a\tb\nc\rd", "\\t literally"] {
            assert_eq!(unescape(&escape(text)).unwrap(), text);
        }
        assert!(unescape("bad\\x").is_err());
    }

    #[test]
    fn mixed_origins_rejected_on_save() {
        let dir = tempfile::tempdir().unwrap();
        let mut pairs = numbered(2).into_pairs();
        pairs[1].origin = Origin::Synthetic(1);
        let c = Corpus::new(pairs, "mix", 0).unwrap();
        assert!(save(&c, &dir.path().join("c.tsv")).is_err());
    }

    #[test]
    fn malformed_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        save(&numbered(3), &path).unwrap();
        let mut body = fs::read_to_string(&path).unwrap();
        body.push_str("only-one-field\n");
        fs::write(&path, body).unwrap();
        match load(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
