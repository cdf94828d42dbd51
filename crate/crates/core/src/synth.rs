//! Synthetic corpora: vocabulary permutation, copy and un-permute tasks,
//! and a small bigram-plus-dictionary "language pair" for desk-scale runs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::transfer::TTable;

/// A tokenized sentence.
pub type Sentence = Vec<String>;
/// A `(source, target)` sentence pair.
pub type TextPair = (Sentence, Sentence);

/// Replaces every type by its image under one uniformly random bijection
/// over the corpus's type set. Returns the permuted corpus and the map.
pub fn permute_vocabulary(corpus: &[Sentence], seed: u64) -> (Vec<Sentence>, BTreeMap<String, String>) {
    let types: BTreeSet<&String> = corpus.iter().flatten().collect();
    let types: Vec<String> = types.into_iter().cloned().collect();
    let mut images = types.clone();
    images.shuffle(&mut crate::seeded_rng(seed));
    let map: BTreeMap<String, String> = types.into_iter().zip(images).collect();
    let permuted = apply_map(corpus, &map);
    (permuted, map)
}

/// Maps every token through `map`; tokens not in the map are kept.
pub fn apply_map(corpus: &[Sentence], map: &BTreeMap<String, String>) -> Vec<Sentence> {
    corpus
        .iter()
        .map(|s| s.iter().map(|t| map.get(t).unwrap_or(t).clone()).collect())
        .collect()
}

/// The inverse of a bijection.
pub fn invert_map(map: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    map.iter().map(|(k, v)| (v.clone(), k.clone())).collect()
}

/// `(s, s)` for every line.
pub fn make_copy_corpus(mono: &[Sentence]) -> Vec<TextPair> {
    mono.iter().map(|s| (s.clone(), s.clone())).collect()
}

/// `(shuffled s, s)` for every line, one seeded permutation per line.
pub fn make_perm_corpus(mono: &[Sentence], seed: u64) -> Vec<TextPair> {
    let mut rng = crate::seeded_rng(seed);
    mono.iter()
        .map(|s| {
            let mut src = s.clone();
            src.shuffle(&mut rng);
            (src, s.clone())
        })
        .collect()
}

/// Shape of a toy language pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GrammarSpec {
    /// Number of target (shared, "English") types.
    pub tgt_types: usize,
    /// Number of source types; at least `tgt_types`.
    pub src_types: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Successors each target type may have in the bigram process.
    pub branching: usize,
    /// Surface prefix of source types, e.g. `"fr"` gives `fr0, fr1, …`.
    pub src_prefix: String,
    pub tgt_prefix: String,
    /// Seeds the target bigram process (share it to share a target language).
    pub target_seed: u64,
    /// Seeds the dictionary (vary it for a new source language).
    pub source_seed: u64,
    pub reorder: Reorder,
}

/// Word-order rule applied when producing the source side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reorder {
    /// Keep target order.
    Monotone,
    /// Emit every modifier-head bigram `A N` as `N A`.
    LocalSwap,
    /// Reverse the whole sentence.
    Reverse,
}

impl GrammarSpec {
    pub fn desk() -> Self {
        GrammarSpec {
            tgt_types: 40,
            src_types: 40,
            min_len: 3,
            max_len: 8,
            branching: 5,
            src_prefix: "f".into(),
            tgt_prefix: "e".into(),
            target_seed: 1,
            source_seed: 2,
            reorder: Reorder::LocalSwap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tgt_types < 2 || self.src_types < 2 {
            return Err(Error::InvalidConfig("toy vocabularies need at least 2 types".into()));
        }
        if self.src_types < self.tgt_types {
            return Err(Error::InvalidConfig(
                "toy source vocabulary must be at least as large as the target".into(),
            ));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::InvalidConfig("toy sentence lengths need 1 <= min <= max".into()));
        }
        if self.branching == 0 {
            return Err(Error::InvalidConfig("branching must be at least 1".into()));
        }
        if self.src_prefix == self.tgt_prefix {
            return Err(Error::InvalidConfig("source and target prefixes must differ".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    /// Modifier: swaps with a following head.
    A,
    /// Head: never directly followed by a modifier in the target.
    N,
    Other,
}

/// A seeded toy language pair.
///
/// Targets come from a sparse bigram process over target types. A target
/// sentence is translated type-by-type through an injective dictionary and
/// then reordered. Under [`Reorder::LocalSwap`] every modifier-head bigram
/// `A N` is emitted as `N A`; heads are never followed by modifiers in the
/// target, so the mapping stays invertible and a rule-based decoder
/// recovers the target exactly.
#[derive(Debug, Clone)]
pub struct ToyGrammar {
    spec: GrammarSpec,
    /// `successors[prev + 1]` (row 0 is the sentence start): `(type, weight)`.
    successors: Vec<Vec<(usize, f64)>>,
    class: Vec<Class>,
    dictionary: Vec<usize>,
    inverse: BTreeMap<usize, usize>,
}

impl ToyGrammar {
    pub fn new(spec: GrammarSpec) -> Result<Self> {
        spec.validate()?;
        let v = spec.tgt_types;
        let mut trng = crate::seeded_rng(spec.target_seed);
        let class: Vec<Class> = (0..v)
            .map(|_| match trng.gen_range(0..4) {
                0 => Class::A,
                1 => Class::N,
                _ => Class::Other,
            })
            .collect();
        let mut successors = Vec::with_capacity(v + 1);
        for prev in 0..=v {
            let allowed: Vec<usize> = (0..v)
                .filter(|&t| !(prev > 0 && class[prev - 1] == Class::N && class[t] == Class::A))
                .collect();
            let k = spec.branching.min(allowed.len());
            let chosen: Vec<usize> = allowed.choose_multiple(&mut trng, k).copied().collect();
            let row = chosen
                .into_iter()
                .map(|t| (t, trng.gen_range(0.2..1.0)))
                .collect();
            successors.push(row);
        }

        let mut srng = crate::seeded_rng(spec.source_seed);
        let mut ids: Vec<usize> = (0..spec.src_types).collect();
        ids.shuffle(&mut srng);
        let dictionary: Vec<usize> = ids[..v].to_vec();
        let inverse = dictionary.iter().enumerate().map(|(t, &s)| (s, t)).collect();
        Ok(ToyGrammar {
            spec,
            successors,
            class,
            dictionary,
            inverse,
        })
    }

    pub fn spec(&self) -> &GrammarSpec {
        &self.spec
    }

    pub fn src_word(&self, id: usize) -> String {
        format!("{}{id}", self.spec.src_prefix)
    }

    pub fn tgt_word(&self, id: usize) -> String {
        format!("{}{id}", self.spec.tgt_prefix)
    }

    /// All source surface forms, in id order.
    pub fn src_types(&self) -> Vec<String> {
        (0..self.spec.src_types).map(|i| self.src_word(i)).collect()
    }

    pub fn tgt_types(&self) -> Vec<String> {
        (0..self.spec.tgt_types).map(|i| self.tgt_word(i)).collect()
    }

    /// Draws one target sentence as type ids.
    pub fn sample_target(&self, rng: &mut crate::Rng) -> Vec<usize> {
        let len = rng.gen_range(self.spec.min_len..=self.spec.max_len);
        let mut out = Vec::with_capacity(len);
        let mut row = 0;
        for _ in 0..len {
            let succ = &self.successors[row];
            let total: f64 = succ.iter().map(|&(_, w)| w).sum();
            let mut r = rng.gen_range(0.0..total);
            let mut pick = succ[succ.len() - 1].0;
            for &(t, w) in succ {
                if r < w {
                    pick = t;
                    break;
                }
                r -= w;
            }
            out.push(pick);
            row = pick + 1;
        }
        out
    }

    /// Source ids for a target sentence.
    pub fn translate(&self, target: &[usize]) -> Vec<usize> {
        match self.spec.reorder {
            Reorder::Monotone => return target.iter().map(|&t| self.dictionary[t]).collect(),
            Reorder::Reverse => return target.iter().rev().map(|&t| self.dictionary[t]).collect(),
            Reorder::LocalSwap => {}
        }
        let mut out = Vec::with_capacity(target.len());
        let mut i = 0;
        while i < target.len() {
            let t = target[i];
            if i + 1 < target.len() && self.class[t] == Class::A && self.class[target[i + 1]] == Class::N {
                out.push(self.dictionary[target[i + 1]]);
                out.push(self.dictionary[t]);
                i += 2;
            } else {
                out.push(self.dictionary[t]);
                i += 1;
            }
        }
        out
    }

    /// Inverts [`translate`](Self::translate) on surface tokens; unknown
    /// source tokens become `<unk>`.
    pub fn oracle_decode<S: AsRef<str>>(&self, source: &[S]) -> Sentence {
        let ids: Vec<Option<usize>> = source
            .iter()
            .map(|s| {
                s.as_ref()
                    .strip_prefix(self.spec.src_prefix.as_str())
                    .and_then(|n| n.parse::<usize>().ok())
                    .and_then(|n| self.inverse.get(&n).copied())
            })
            .collect();
        let word = |t: Option<usize>| t.map_or_else(|| String::from("<unk>"), |t| self.tgt_word(t));
        match self.spec.reorder {
            Reorder::Monotone => return ids.into_iter().map(word).collect(),
            Reorder::Reverse => return ids.into_iter().rev().map(word).collect(),
            Reorder::LocalSwap => {}
        }
        let class = |t: Option<usize>| t.map(|t| self.class[t]);
        let mut out = Vec::with_capacity(ids.len());
        let mut i = 0;
        while i < ids.len() {
            if i + 1 < ids.len() && class(ids[i]) == Some(Class::N) && class(ids[i + 1]) == Some(Class::A) {
                out.push(word(ids[i + 1]));
                out.push(word(ids[i]));
                i += 2;
            } else {
                out.push(word(ids[i]));
                i += 1;
            }
        }
        out
    }

    /// One `(source, target)` surface pair.
    pub fn sample_pair(&self, rng: &mut crate::Rng) -> TextPair {
        let tgt = self.sample_target(rng);
        let src = self.translate(&tgt);
        (
            src.into_iter().map(|s| self.src_word(s)).collect(),
            tgt.into_iter().map(|t| self.tgt_word(t)).collect(),
        )
    }

    /// The word-for-word dictionary as a deterministic t-table
    /// (`source word → target word`, probability 1).
    pub fn src_to_tgt_table(&self) -> TTable {
        let mut t = TTable::new();
        for (tgt, &src) in self.dictionary.iter().enumerate() {
            t.insert(&self.src_word(src), &self.tgt_word(tgt), 1.0)
                .expect("probability 1 is valid");
        }
        t
    }

    /// `target word → source word`, probability 1.
    pub fn tgt_to_src_table(&self) -> TTable {
        let mut t = TTable::new();
        for (tgt, &src) in self.dictionary.iter().enumerate() {
            t.insert(&self.tgt_word(tgt), &self.src_word(src), 1.0)
                .expect("probability 1 is valid");
        }
        t
    }

    /// True log-probability of a target sentence under the generator:
    /// the uniform length draw plus the bigram chain.
    pub fn target_logprob(&self, target: &[usize]) -> f64 {
        let lengths = (self.spec.max_len - self.spec.min_len + 1) as f64;
        if target.len() < self.spec.min_len || target.len() > self.spec.max_len {
            return f64::NEG_INFINITY;
        }
        -num_traits::Float::ln(lengths) + self.bigram_logprob(target)
    }

    /// Log-probability of the bigram chain alone.
    pub fn bigram_logprob(&self, target: &[usize]) -> f64 {
        let mut row = 0;
        let mut lp = 0.0;
        for &t in target {
            let succ = &self.successors[row];
            let total: f64 = succ.iter().map(|&(_, w)| w).sum();
            let w = succ.iter().find(|&&(s, _)| s == t).map_or(0.0, |&(_, w)| w);
            lp += num_traits::Float::ln(w / total);
            row = t + 1;
        }
        lp
    }
}

/// `count` pairs from the toy grammar described by `spec`, drawn with `seed`.
pub fn gen_toy_bitext(spec: &GrammarSpec, seed: u64, count: usize) -> Result<Vec<TextPair>> {
    let g = ToyGrammar::new(spec.clone())?;
    let mut rng = crate::seeded_rng(seed);
    Ok((0..count).map(|_| g.sample_pair(&mut rng)).collect())
}
