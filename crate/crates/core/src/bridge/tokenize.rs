use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

pub const PAUSE: u32 = 0;
pub const PAUSE_TOKEN: &str = "<pause>";

/// Token vocabulary with the pause token reserved at id 0.
///
/// Text is split on whitespace; a word that is itself a vocabulary entry
/// becomes one token, otherwise it is spelled out character by character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl TokenVocab {
    /// Builds a vocabulary from non-pause tokens; ids start at 1.
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut all = vec![PAUSE_TOKEN.to_owned()];
        all.extend(tokens.into_iter().map(Into::into));
        Self::from_ordered(all)
    }

    fn from_ordered(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!("invalid vocabulary token {t:?}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Character-level vocabulary covering every character of `labels`.
    pub fn char_level<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut chars: Vec<char> = labels
            .into_iter()
            .flat_map(|l| l.chars())
            .filter(|c| !c.is_whitespace())
            .collect();
        chars.sort_unstable();
        chars.dedup();
        Self::new(chars.into_iter().map(String::from)).expect("distinct characters")
    }

    /// Reads `token<TAB>id` lines; ids must cover 0..P with 0 the pause token.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut slots: Vec<Option<String>> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let malformed = |message: String| Error::Malformed {
                path: path.to_owned(),
                line: n + 1,
                message,
            };
            let (tok, id) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected token<TAB>id".into()))?;
            let id: usize = id.trim().parse().map_err(|e| malformed(format!("bad id: {e}")))?;
            if slots.len() <= id {
                slots.resize(id + 1, None);
            }
            if slots[id].replace(tok.to_owned()).is_some() {
                return Err(malformed(format!("id {id} assigned twice")));
            }
        }
        let tokens = slots
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                t.ok_or_else(|| Error::Malformed {
                    path: path.to_owned(),
                    line: 0,
                    message: format!("id {i} missing; ids must be dense"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if tokens.first().map(String::as_str) != Some(PAUSE_TOKEN) {
            return Err(Error::Malformed {
                path: path.to_owned(),
                line: 0,
                message: format!("id 0 must be {PAUSE_TOKEN}"),
            });
        }
        Self::from_ordered(tokens)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(out, "{t}\t{i}").unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Vocabulary size P, pause token included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Per-word tokens; `None` marks characters outside the vocabulary.
    fn word_tokens(&self, word: &str) -> Vec<Result<u32, char>> {
        if let Some(id) = self.id(word) {
            return vec![Ok(id)];
        }
        let mut buf = [0u8; 4];
        word.chars()
            .map(|c| self.id(c.encode_utf8(&mut buf)).ok_or(c))
            .collect()
    }

    /// Tokenizes a label; words are separated by the pause token.
    pub fn encode_label(&self, label: &str) -> Result<Vec<u32>> {
        let mut out = Vec::new();
        for (i, word) in label.split_whitespace().enumerate() {
            if i > 0 {
                out.push(PAUSE);
            }
            for t in self.word_tokens(word) {
                out.push(t.map_err(|c| Error::OutOfVocabulary {
                    label: label.to_owned(),
                    token: c.to_string(),
                })?);
            }
        }
        Ok(out)
    }

    /// Inverse of [`encode_label`](Self::encode_label); trailing pauses are ignored.
    pub fn decode_label(&self, tokens: &[u32]) -> Option<String> {
        let mut words: Vec<String> = vec![String::new()];
        for &t in tokens {
            if t == PAUSE {
                words.push(String::new());
            } else {
                words.last_mut().unwrap().push_str(self.token(t)?);
            }
        }
        while words.last().is_some_and(String::is_empty) {
            words.pop();
        }
        Some(words.join(" "))
    }

    /// Question tokens, lowercased; `None` for out-of-vocabulary characters.
    pub fn encode_text_lossy(&self, text: &str) -> Vec<Option<u32>> {
        text.to_lowercase()
            .split_whitespace()
            .flat_map(|w| self.word_tokens(w))
            .map(|t| t.ok())
            .collect()
    }
}

/// Pause-padded label token sequences, all of length M+1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedLabelSet {
    sequences: Vec<Vec<u32>>,
    vocab_size: usize,
}

impl TokenizedLabelSet {
    /// `C^T` rows for `labels`: tokenized, then padded with pause to `m + 1`.
    pub fn tokenize<S: AsRef<str>>(labels: &[S], vocab: &TokenVocab, m: usize) -> Result<Self> {
        let seqs = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                let toks = vocab.encode_label(l)?;
                if toks.len() > m {
                    return Err(Error::LabelTooLong {
                        label: l.to_owned(),
                        needed: toks.len(),
                        limit: m,
                    });
                }
                Ok(toks)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_token_sequences(seqs, m, vocab.len())
    }

    /// Pads pre-tokenized sequences (each at most `m` long) to `m + 1`.
    pub fn from_token_sequences(seqs: Vec<Vec<u32>>, m: usize, vocab_size: usize) -> Result<Self> {
        let mut sequences = Vec::with_capacity(seqs.len());
        for (i, mut s) in seqs.into_iter().enumerate() {
            if s.len() > m {
                return Err(Error::LabelTooLong {
                    label: format!("label #{i}"),
                    needed: s.len(),
                    limit: m,
                });
            }
            if let Some(&bad) = s.iter().find(|&&t| t as usize >= vocab_size) {
                return Err(Error::Dimension(format!(
                    "token id {bad} out of range for vocabulary of size {vocab_size}"
                )));
            }
            s.resize(m + 1, PAUSE);
            sequences.push(s);
        }
        Ok(Self { sequences, vocab_size })
    }

    /// Number of labels N.
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Sequence length M+1.
    pub fn positions(&self) -> usize {
        self.sequences.first().map_or(0, Vec::len)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn sequences(&self) -> &[Vec<u32>] {
        &self.sequences
    }

    /// Target token of flattened row `i` (class `i / (M+1)`, position `i % (M+1)`).
    pub fn target(&self, row: usize) -> u32 {
        let m1 = self.positions();
        self.sequences[row / m1][row % m1]
    }

    /// Dense one-hot matrix of shape N(M+1)×P, row-major.
    pub fn one_hot(&self) -> Vec<f64> {
        let rows = self.len() * self.positions();
        let mut out = vec![0.0; rows * self.vocab_size];
        for r in 0..rows {
            out[r * self.vocab_size + self.target(r) as usize] = 1.0;
        }
        out
    }
}
