//! Vocabularies, encoding, and few-shot prompt assembly.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ParallelPair, Sentence};
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const SEP: u32 = 3;
pub const UNK: u32 = 4;
pub const NUM_SPECIALS: usize = 5;

const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<s>", "</s>", "<sep>", "<unk>"];

/// What an unknown token decodes to.
pub const REPLACEMENT: char = '\u{FFFD}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenMode {
    #[default]
    Char,
    Word,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSeq(pub Vec<u32>);

impl TokenSeq {
    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn is_special(id: u32) -> bool {
    (id as usize) < NUM_SPECIALS
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    mode: TokenMode,
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

impl Vocab {
    fn from_tokens(mode: TokenMode, tokens: Vec<String>) -> Result<Self> {
        let mut id_to_token: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(tokens);
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (i, t) in id_to_token.iter().enumerate() {
            if token_to_id.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {t:?}")));
            }
        }
        if id_to_token.len() < NUM_SPECIALS + 1 {
            return Err(Error::Config("vocabulary has no ordinary tokens".into()));
        }
        Ok(Vocab {
            mode,
            id_to_token,
            token_to_id,
        })
    }

    pub fn mode(&self) -> TokenMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn encode(&self, text: &str) -> TokenSeq {
        let lookup = |t: &str| self.token_to_id.get(t).copied().filter(|&id| !is_special(id)).unwrap_or(UNK);
        let ids = match self.mode {
            TokenMode::Char => {
                let mut buf = [0u8; 4];
                text.chars().map(|c| lookup(c.encode_utf8(&mut buf))).collect()
            }
            TokenMode::Word => text.split_whitespace().map(lookup).collect(),
        };
        TokenSeq(ids)
    }

    /// Render ids as text. Specials vanish except UNK, which becomes
    /// [`REPLACEMENT`]; out-of-range ids are treated as UNK.
    pub fn decode(&self, ids: &[u32]) -> String {
        let pieces = ids.iter().filter_map(|&id| match id {
            UNK => Some(REPLACEMENT.to_string()),
            id if is_special(id) => None,
            id => Some(
                self.id_to_token
                    .get(id as usize)
                    .cloned()
                    .unwrap_or_else(|| REPLACEMENT.to_string()),
            ),
        });
        match self.mode {
            TokenMode::Char => pieces.collect(),
            TokenMode::Word => pieces.collect::<Vec<_>>().join(" "),
        }
    }

    /// One token per line, id = line index. Space is written as `\s`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = String::new();
        for t in &self.id_to_token {
            body.push_str(&t.replace('\\', "\\\\").replace(' ', "\\s"));
            body.push('\n');
        }
        fs::write(path, body).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path, mode: TokenMode) -> Result<Vocab> {
        let body = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let lines: Vec<&str> = body.lines().collect();
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if lines.get(i) != Some(special) {
                return Err(parse_err(i + 1, format!("expected special token {special}")));
            }
        }
        let mut tokens = Vec::new();
        for (i, line) in lines.iter().enumerate().skip(NUM_SPECIALS) {
            let mut tok = String::new();
            let mut chars = line.chars();
            while let Some(c) = chars.next() {
                if c == '\\' {
                    match chars.next() {
                        Some('s') => tok.push(' '),
                        Some('\\') => tok.push('\\'),
                        _ => return Err(parse_err(i + 1, "bad escape".into())),
                    }
                } else {
                    tok.push(c);
                }
            }
            tokens.push(tok);
        }
        Vocab::from_tokens(mode, tokens).map_err(|e| parse_err(0, e.to_string()))
    }
}

/// Build a vocabulary from both sides of `corpus`: most frequent tokens first,
/// ties broken lexicographically, capped at `max_size` including specials.
pub fn build_vocab(corpus: &Corpus, mode: TokenMode, max_size: usize) -> Result<Vocab> {
    if max_size < NUM_SPECIALS + 1 {
        return Err(Error::Config(format!(
            "vocabulary size must be at least {}, got {max_size}",
            NUM_SPECIALS + 1
        )));
    }
    if corpus.is_empty() {
        return Err(Error::Input("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for pair in corpus.pairs() {
        for side in [&pair.source, &pair.target] {
            match mode {
                TokenMode::Char => {
                    for c in side.as_str().chars() {
                        *counts.entry(c.to_string()).or_default() += 1;
                    }
                }
                TokenMode::Word => {
                    for w in side.words() {
                        *counts.entry(w.to_string()).or_default() += 1;
                    }
                }
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, _)| !SPECIAL_TOKENS.contains(&t.as_str()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - NUM_SPECIALS);
    Vocab::from_tokens(mode, ranked.into_iter().map(|(t, _)| t).collect())
}

/// Encoder input for `source` with `shots` example pairs placed before it:
/// `BOS (src SEP tgt SEP)* source SEP`.
pub fn assemble_prompt(
    examples: &[ParallelPair],
    source: &Sentence,
    shots: usize,
    vocab: &Vocab,
) -> Result<TokenSeq> {
    if examples.len() != shots {
        return Err(Error::Arity {
            expected: shots,
            actual: examples.len(),
        });
    }
    let mut ids = vec![BOS];
    for ex in examples {
        ids.extend(vocab.encode(ex.source.as_str()).0);
        ids.push(SEP);
        ids.extend(vocab.encode(ex.target.as_str()).0);
        ids.push(SEP);
    }
    ids.extend(vocab.encode(source.as_str()).0);
    ids.push(SEP);
    Ok(TokenSeq(ids))
}

/// Fixed few-shot examples for a run, plus the shot count to use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptContext {
    pub shots: usize,
    pub examples: Vec<ParallelPair>,
}

impl PromptContext {
    pub fn zero_shot() -> Self {
        PromptContext {
            shots: 0,
            examples: Vec::new(),
        }
    }

    /// Use the first `shots` of `pool`.
    pub fn from_pool(pool: &[ParallelPair], shots: usize) -> Result<Self> {
        if pool.len() < shots {
            return Err(Error::Size {
                requested: shots,
                available: pool.len(),
            });
        }
        Ok(PromptContext {
            shots,
            examples: pool[..shots].to_vec(),
        })
    }

    pub fn prompt(&self, source: &Sentence, vocab: &Vocab) -> Result<TokenSeq> {
        assemble_prompt(&self.examples, source, self.shots, vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[(&str, &str)]) -> Corpus {
        let pairs = lines
            .iter()
            .map(|(s, t)| ParallelPair::human(Sentence::new(*s).unwrap(), Sentence::new(*t).unwrap()))
            .collect();
        Corpus::new(pairs, "t", 0).unwrap()
    }

    #[test]
    fn single_char_corpus() {
        let v = build_vocab(&corpus(&[("aa", "aa")]), TokenMode::Char, 100).unwrap();
        assert_eq!(v.len(), NUM_SPECIALS + 1);
        assert_eq!(v.id("a"), Some(5));
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = build_vocab(&corpus(&[("ba", "ab")]), TokenMode::Char, 100).unwrap();
        assert!(v.id("a").unwrap() < v.id("b").unwrap());
    }

    #[test]
    fn max_size_caps_and_validates() {
        let c = corpus(&[("aab", "c")]);
        assert!(matches!(build_vocab(&c, TokenMode::Char, 5), Err(Error::Config(_))));
        let v = build_vocab(&c, TokenMode::Char, 6).unwrap();
        assert_eq!(v.tokens()[5], "a");
        assert_eq!(v.encode("b").ids(), &[UNK]);
    }

    #[test]
    fn encode_decode_edges() {
        let v = build_vocab(&corpus(&[("ab c", "c ba")]), TokenMode::Char, 100).unwrap();
        assert!(v.encode("").is_empty());
        assert_eq!(v.decode(&[]), "");
        assert_eq!(v.decode(v.encode("ab c").ids()), "ab c");
        assert_eq!(v.decode(v.encode("abxc").ids()), format!("ab{REPLACEMENT}c"));
    }

    #[test]
    fn word_mode_roundtrip() {
        let v = build_vocab(&corpus(&[("ab cd", "cd ab")]), TokenMode::Word, 100).unwrap();
        assert_eq!(v.encode("cd ab").len(), 2);
        assert_eq!(v.decode(v.encode("cd ab").ids()), "cd ab");
    }

    #[test]
    fn special_spellings_in_text_are_unknown() {
        let v = build_vocab(&corpus(&[("a <s>", "a")]), TokenMode::Word, 100).unwrap();
        assert_eq!(v.encode("<s>").ids(), &[UNK]);
    }

    #[test]
    fn prompt_layouts() {
        let c = corpus(&[("ab", "ba"), ("a", "a")]);
        let v = build_vocab(&c, TokenMode::Char, 100).unwrap();
        let src = Sentence::new("ab").unwrap();
        let a = v.id("a").unwrap();
        let b = v.id("b").unwrap();
        assert_eq!(assemble_prompt(&[], &src, 0, &v).unwrap().0, vec![BOS, a, b, SEP]);
        let one = assemble_prompt(&c.pairs()[..1], &src, 1, &v).unwrap();
        assert_eq!(one.0, vec![BOS, a, b, SEP, b, a, SEP, a, b, SEP]);
        assert!(matches!(
            assemble_prompt(&c.pairs()[..1], &src, 4, &v),
            Err(Error::Arity { expected: 4, actual: 1 })
        ));
    }

    #[test]
    fn vocab_file_roundtrip_keeps_space() {
        let v = build_vocab(&corpus(&[("a b\\", "b a")]), TokenMode::Char, 100).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        assert_eq!(Vocab::load(&path, TokenMode::Char).unwrap(), v);
    }
}
