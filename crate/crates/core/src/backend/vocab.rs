use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub type TokenId = usize;

/// Word-level vocabulary with whitespace tokenization; a trailing `.` becomes
/// its own token.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: BTreeMap<String, TokenId>,
    unk: TokenId,
}

impl Vocabulary {
    /// `unk` must be one of `words`.
    pub fn new<S: AsRef<str>>(words: &[S], unk: &str) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut list = Vec::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            let w = w.as_ref();
            if index.insert(w.to_string(), i).is_some() {
                return Err(Error::invalid_arg(alloc::format!("duplicate vocabulary word `{w}`")));
            }
            list.push(w.to_string());
        }
        let unk = *index
            .get(unk)
            .ok_or_else(|| Error::invalid_arg("unknown-word token missing from vocabulary"))?;
        Ok(Vocabulary {
            words: list,
            index,
            unk,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: TokenId) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn unk(&self) -> TokenId {
        self.unk
    }

    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for piece in text.split_whitespace() {
            let lower = piece.to_lowercase();
            let trimmed = lower.trim_end_matches('.');
            let periods = lower.len() - trimmed.len();
            let word = trimmed.trim_matches(|c: char| !c.is_alphanumeric() && c != '<' && c != '>');
            if !word.is_empty() {
                out.push(self.id(word).unwrap_or(self.unk));
            }
            if periods > 0 {
                if let Some(p) = self.id(".") {
                    out.push(p);
                }
            }
        }
        out
    }

    pub fn detokenize(&self, tokens: &[TokenId]) -> String {
        let mut out = String::new();
        for &t in tokens {
            let w = self.word(t).unwrap_or("<unk>");
            if !out.is_empty() && w != "." {
                out.push(' ');
            }
            out.push_str(w);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_period() {
        let v = Vocabulary::new(&["<unk>", ".", "a", "red", "box"], "<unk>").unwrap();
        let t = v.tokenize("A red box.");
        assert_eq!(t, vec![2, 3, 4, 1]);
        assert_eq!(v.detokenize(&t), "a red box.");
        assert_eq!(v.tokenize("a purple, box"), vec![2, 0, 4]);
        assert!(Vocabulary::new(&["a", "a"], "a").is_err());
    }
}
