//! Case-insensitive, single-reference corpus BLEU-4.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics of BLEU: clipped matches and totals per order,
/// plus hypothesis and reference lengths. They add across sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn sentence<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Self {
        let hyp = fold(hyp);
        let reference = fold(reference);
        let mut st = BleuStats {
            hyp_len: hyp.len(),
            ref_len: reference.len(),
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let h = ngrams(&hyp, n);
            let r = ngrams(&reference, n);
            st.totals[n - 1] = hyp.len().saturating_sub(n - 1);
            st.matches[n - 1] = h
                .iter()
                .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
                .sum();
        }
        st
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// `100 · BP · exp(mean log pₙ)`, or 0 when any precision is zero.
    ///
    /// Orders with no hypothesis n-grams at all (every hypothesis shorter
    /// than `n`) have no precision and are left out of the mean, so a
    /// corpus of short sentences still scores 100 against itself.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0;
        for n in 0..MAX_ORDER {
            if self.totals[n] == 0 {
                continue;
            }
            if self.matches[n] == 0 {
                return 0.0;
            }
            log_sum += Float::ln(self.matches[n] as f64 / self.totals[n] as f64);
            orders += 1;
        }
        let ratio = self.ref_len as f64 / self.hyp_len as f64;
        let bp = Float::exp(Float::min(1.0 - ratio, 0.0));
        100.0 * bp * Float::exp(log_sum / orders as f64)
    }
}

fn fold<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens.iter().map(|t| t.as_ref().to_lowercase()).collect()
}

fn ngrams(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut out = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Corpus BLEU in `[0, 100]` of `hypotheses` against aligned `references`.
pub fn bleu<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>]) -> Result<f64> {
    Ok(corpus_stats(hypotheses, references)?.score())
}

pub fn corpus_stats<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>]) -> Result<BleuStats> {
    if hypotheses.len() != references.len() {
        return Err(Error::InvalidConfig(alloc::format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut total = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        total.add(&BleuStats::sentence(h, r));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_is_hundred_and_disjoint_is_zero() {
        let a = vec![toks("the cat sat on the mat")];
        assert!((bleu(&a, &a).unwrap() - 100.0).abs() < 1e-9);
        let b = vec![toks("dogs run far away now")];
        assert_eq!(bleu(&b, &a).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_lengths_error() {
        assert!(bleu(&[toks("a")], &[]).is_err());
    }
}
