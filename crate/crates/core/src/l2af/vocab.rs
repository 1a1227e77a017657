use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token → index map: PAD, UNK, then the most frequent training tokens
/// (ties broken lexicographically).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a [String]>, max_size: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for d in docs {
            for t in d {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1));
        ranked.truncate(max_size);
        let tokens = [PAD_TOKEN, UNK_TOKEN]
            .into_iter()
            .chain(ranked.into_iter().map(|(t, _)| t))
            .map(String::from)
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    /// Token ids truncated to `max_len`; errors on an empty document.
    pub fn encode(&self, tokens: &[String], max_len: usize) -> Result<Vec<usize>> {
        if tokens.is_empty() {
            return Err(Error::invalid("cannot encode an empty token sequence"));
        }
        Ok(tokens.iter().take(max_len).map(|t| self.id(t)).collect())
    }

    pub(crate) fn restore_index(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn frequency_order_with_specials_first() {
        let a = toks("b a b c");
        let v = Vocabulary::build([a.as_slice()], 2);
        assert_eq!(v.tokens(), [PAD_TOKEN, UNK_TOKEN, "b", "a"]);
        assert_eq!(v.id("c"), UNK);
        assert_eq!(v.encode(&toks("a b c a"), 3).unwrap(), vec![3, 2, UNK]);
        assert!(v.encode(&[], 3).is_err());
    }
}
