use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Label, Sample};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Token index. Index 0 is padding, index 1 the unknown token; the rest
/// follow first occurrence order in the samples it was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::from_tokens(Vec::<String>::new())
    }
}

impl Vocabulary {
    pub fn from_tokens<I, S>(tokens: I) -> Vocabulary
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.insert(PAD_TOKEN.to_string());
        v.insert(UNK_TOKEN.to_string());
        for t in tokens {
            v.insert(t.into());
        }
        v
    }

    pub fn build<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Vocabulary {
        let mut v = Vocabulary::default();
        for s in samples {
            for t in &s.tokens {
                v.insert(t.clone());
            }
        }
        v
    }

    fn insert(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Words only, without the padding and unknown markers.
    pub fn words(&self) -> &[String] {
        &self.tokens[2..]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        for t in self.words() {
            writeln!(out, "{t}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vocabulary> {
        let path = path.as_ref();
        let content = fs::read_to_string(path)?;
        let mut words = Vec::new();
        for (i, line) in content.lines().enumerate() {
            let w = line.trim_end_matches('\r');
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::parse(path, i + 1, "vocabulary lines must hold one token"));
            }
            words.push(w.to_string());
        }
        Ok(Vocabulary::from_tokens(words))
    }
}

/// Fixed-length index sequence plus the number of real tokens in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSample {
    pub indices: Vec<usize>,
    pub length: usize,
    pub label: Label,
}

impl EncodedSample {
    pub fn tokens(&self) -> &[usize] {
        &self.indices[..self.length]
    }
}

pub fn encode(sample: &Sample, vocab: &Vocabulary, max_len: usize) -> EncodedSample {
    let mut indices: Vec<usize> = sample
        .tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.index_of(t))
        .collect();
    let length = indices.len();
    indices.resize(max_len, PAD);
    EncodedSample {
        indices,
        length,
        label: sample.label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pads_short_samples() {
        let s = Sample::new("a b c", Label::NonAbusive);
        let v = Vocabulary::build([&s]);
        let e = encode(&s, &v, 100);
        assert_eq!(e.indices.len(), 100);
        assert_eq!(e.length, 3);
        assert!(e.indices[3..].iter().all(|&i| i == PAD));
        assert!(e.tokens().iter().all(|&i| i != PAD && i != UNK));
    }

    #[test]
    fn truncates_long_samples() {
        let text = (0..120).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let s = Sample::new(text, Label::Abusive);
        let v = Vocabulary::build([&s]);
        let e = encode(&s, &v, 100);
        assert_eq!(e.length, 100);
        assert_eq!(e.indices[99], v.index_of("w99"));
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let train = Sample::new("hello there", Label::NonAbusive);
        let v = Vocabulary::build([&train]);
        let e = encode(&Sample::new("hello stranger", Label::NonAbusive), &v, 4);
        assert_eq!(&e.indices, &[v.index_of("hello"), UNK, PAD, PAD]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = Vocabulary::from_tokens(["x", "y", "!"]);
        v.save(dir.path().join("v.txt")).unwrap();
        assert_eq!(Vocabulary::load(dir.path().join("v.txt")).unwrap(), v);
    }
}
