use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

/// Surface forms of the reserved ids, in id order.
pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Bijection between word types and ids. Ids `0..4` are the reserved
/// `<pad>`, `<unk>`, `<s>` and `</s>`; ordinary types follow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    types: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_types(core::iter::empty::<&str>()).expect("specials only")
    }
}

impl Vocabulary {
    /// Builds a vocabulary whose non-reserved ids follow `types` in order.
    /// Duplicates and reserved surface forms are rejected.
    pub fn from_types<S: AsRef<str>>(types: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut v = Vocabulary {
            types: SPECIALS.iter().map(|s| s.to_string()).collect(),
            index: BTreeMap::new(),
        };
        for (i, s) in SPECIALS.iter().enumerate() {
            v.index.insert(s.to_string(), i);
        }
        for t in types {
            let t = t.as_ref();
            if v.index.contains_key(t) {
                return Err(Error::VocabularyMismatch(alloc::format!(
                    "type `{t}` listed twice or shadows a reserved id"
                )));
            }
            v.index.insert(t.to_string(), v.types.len());
            v.types.push(t.to_string());
        }
        Ok(v)
    }

    /// Frequency-ranked vocabulary over `sentences`, ties broken
    /// lexicographically. `max_types` caps the non-reserved entries.
    pub fn build<'a, S>(sentences: impl IntoIterator<Item = &'a S>, max_types: Option<usize>) -> Self
    where
        S: AsRef<[String]> + 'a + ?Sized,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in sentences {
            for tok in s.as_ref() {
                if SPECIALS.contains(&tok.as_str()) {
                    continue;
                }
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        // BTreeMap iteration is already lexicographic; a stable sort keeps it for ties
        ranked.sort_by_key(|e| core::cmp::Reverse(e.1));
        if let Some(cap) = max_types {
            ranked.truncate(cap);
        }
        Self::from_types(ranked.into_iter().map(|(t, _)| t)).expect("types are unique")
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    /// Always false: the reserved ids are present in every vocabulary.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of `token`, or `<unk>`.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.types.get(id).map(String::as_str)
    }

    /// Maps tokens to ids, substituting `<unk>` for unknown types.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(SPECIALS[UNK]).to_string())
            .collect()
    }

    /// Non-reserved types in id order.
    pub fn types(&self) -> &[String] {
        &self.types[SPECIALS.len()..]
    }

    pub fn check_id(&self, id: usize) -> Result<()> {
        if id >= self.len() {
            return Err(Error::IdOutOfRange { id, size: self.len() });
        }
        Ok(())
    }
}
