use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Result, VeError};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ index map with `<pad>` at 0 and `<unk>` at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.push(PAD_TOKEN);
        v.push(UNK_TOKEN);
        v
    }
}

impl Vocabulary {
    fn push(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    /// One entry per distinct token in first-occurrence order, after the
    /// two specials.
    pub fn build<'a, I, S>(corpus: I) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut v = Self::default();
        for sentence in corpus {
            for tok in sentence {
                v.push(tok.as_ref());
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, i: usize) -> Option<&str> {
        self.tokens.get(i).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, index order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in r.lines() {
            tokens.push(line?);
        }
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(VeError::Format(
                "vocabulary file must start with <pad> and <unk>".into(),
            ));
        }
        let mut v = Self::default();
        for (line, t) in tokens.iter().enumerate().skip(2) {
            if v.index.contains_key(t) {
                return Err(VeError::Parse {
                    line: line + 1,
                    msg: format!("duplicate token {t:?}"),
                });
            }
            v.push(t);
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_corpus_has_specials_only() {
        let v = Vocabulary::build(std::iter::empty::<&[String]>());
        assert_eq!(v.len(), 2);
        assert_eq!(v.token(PAD), Some(PAD_TOKEN));
        assert_eq!(v.token(UNK), Some(UNK_TOKEN));
    }

    #[test]
    fn distinct_tokens_in_first_occurrence_order() {
        let corpus = [vec!["a", "b"], vec!["b", "c"]];
        let v = Vocabulary::build(corpus.iter().map(|s| s.as_slice()));
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("c"), 4);
        assert_eq!(v.id("zzz"), UNK);
        for i in 0..v.len() {
            assert_eq!(v.id(v.token(i).unwrap()), i);
        }
    }

    #[test]
    fn file_round_trip() {
        let corpus = [vec!["x", "y", "x"]];
        let v = Vocabulary::build(corpus.iter().map(|s| s.as_slice()));
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        assert_eq!(Vocabulary::read_from(&buf[..]).unwrap(), v);
        assert!(Vocabulary::read_from(&b"x\ny\n"[..]).is_err());
    }
}
