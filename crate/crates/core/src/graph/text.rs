//! Closed-vocabulary whitespace tokenizer.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const MASK: u32 = 2;
pub const CLS: u32 = 3;

/// Number of reserved ids at the front of every [`WordVocab`].
pub const NUM_SPECIAL: u32 = 4;

const SPECIALS: [&str; NUM_SPECIAL as usize] = ["<pad>", "<unk>", "<mask>", "<cls>"];

/// Normalized words mapped to ids. Ids `0..4` are `<pad> <unk> <mask> <cls>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordVocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for WordVocab {
    fn default() -> Self {
        let mut v = Self { words: Vec::new(), index: HashMap::new() };
        for s in SPECIALS {
            v.push(s);
        }
        v
    }
}

impl WordVocab {
    fn push(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.index.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(w.to_string());
        self.index.insert(w.to_string(), id);
        id
    }

    /// Adds every normalized token of `texts` in first-seen order.
    pub fn from_texts<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> Self {
        let mut v = Self::default();
        for t in texts {
            v.extend_with(t);
        }
        v
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::default();
        for t in tokens {
            v.extend_with(t.as_ref());
        }
        v
    }

    pub fn extend_with(&mut self, text: &str) {
        for w in normalize(text) {
            self.push(&w);
        }
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= NUM_SPECIAL as usize
    }

    /// One word per line, line number = id.
    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut s = String::new();
        for w in &self.words {
            s.push_str(w);
            s.push('\n');
        }
        fs::write(path, s)
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        for expect in SPECIALS {
            if lines.next() != Some(expect) {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("vocabulary file must start with {SPECIALS:?}"),
                ));
            }
        }
        let mut v = Self::default();
        for w in lines {
            v.push(w);
        }
        Ok(v)
    }
}

/// Words of `tokens` joined by spaces; the mask token prints as `[MASK]`.
pub fn detokenize(tokens: &[u32], vocab: &WordVocab) -> String {
    tokens
        .iter()
        .map(|&t| if t == MASK { "[MASK]" } else { vocab.word(t).unwrap_or("<unk>") })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lowercased whitespace-split tokens.
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Tokens of `sentence` as vocabulary ids; unknown words become [`UNK`].
/// The literal `[MASK]` becomes the [`MASK`] id.
pub fn tokenize(sentence: &str, vocab: &WordVocab) -> Vec<u32> {
    sentence
        .split_whitespace()
        .map(|w| {
            if w == "[MASK]" {
                MASK
            } else {
                vocab.id(&w.to_lowercase()).unwrap_or(UNK)
            }
        })
        .collect()
}
