//! N-best rescoring: neural features, grid-tuned weights, reranking.
//!
//! Text format, one entry per line:
//!
//! ```text
//! sentence_id ||| token sequence ||| name=value name=value ||| total
//! ```
//!
//! The external system's `total` is available to weights and tuning under
//! the feature name [`EXTERNAL`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::bleu::{corpus_stats, BleuStats};
use crate::decoder::Ensemble;
use crate::error::{Error, Result};
use crate::lm::{lm_sentence_logprob, LanguageModel};
use crate::model::Seq2Seq;
use crate::real::Real;

/// Feature name under which the external system's total score is exposed.
pub const EXTERNAL: &str = "external";

#[derive(Debug, Clone, PartialEq)]
pub struct NBestEntry {
    pub tokens: Vec<String>,
    pub features: BTreeMap<String, f64>,
    /// The external system's total score.
    pub total: f64,
    /// 1-based position in the external system's list.
    pub rank: usize,
    /// Line in the source file (0 when built in memory).
    pub line: usize,
}

impl NBestEntry {
    pub fn feature(&self, name: &str) -> Option<f64> {
        if name == EXTERNAL {
            Some(self.total)
        } else {
            self.features.get(name).copied()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NBestSentence {
    pub id: usize,
    pub entries: Vec<NBestEntry>,
}

/// Ranked hypotheses for a sequence of source sentences, in id order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NBestList {
    pub sentences: Vec<NBestSentence>,
}

impl NBestList {
    pub fn parse(text: &str) -> Result<Self> {
        let mut by_id: BTreeMap<usize, Vec<NBestEntry>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line, message };
            let fields: Vec<&str> = raw.split("|||").map(str::trim).collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 `|||`-separated fields, found {}", fields.len())));
            }
            let id: usize = fields[0]
                .parse()
                .map_err(|_| err(format!("bad sentence id `{}`", fields[0])))?;
            let mut features = BTreeMap::new();
            for pair in fields[2].split_whitespace() {
                let (name, value) = pair
                    .split_once('=')
                    .ok_or_else(|| err(format!("feature `{pair}` is not name=value")))?;
                let value: f64 = value
                    .parse()
                    .map_err(|_| err(format!("feature `{name}` has a bad value `{value}`")))?;
                if name == EXTERNAL {
                    return Err(err(format!("feature name `{EXTERNAL}` is reserved for the total")));
                }
                features.insert(name.to_string(), value);
            }
            let total: f64 = fields[3]
                .parse()
                .map_err(|_| err(format!("bad total `{}`", fields[3])))?;
            let entries = by_id.entry(id).or_default();
            entries.push(NBestEntry {
                tokens: fields[1].split_whitespace().map(String::from).collect(),
                features,
                total,
                rank: entries.len() + 1,
                line,
            });
        }
        Ok(NBestList {
            sentences: by_id
                .into_iter()
                .map(|(id, entries)| NBestSentence { id, entries })
                .collect(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            for e in &s.entries {
                let feats: Vec<String> = e.features.iter().map(|(k, v)| format!("{k}={v}")).collect();
                out.push_str(&format!(
                    "{} ||| {} ||| {} ||| {}\n",
                    s.id,
                    e.tokens.join(" "),
                    feats.join(" "),
                    e.total
                ));
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// The external system's first-ranked hypothesis per sentence.
    pub fn external_one_best(&self) -> Vec<Vec<String>> {
        self.sentences
            .iter()
            .map(|s| {
                s.entries
                    .iter()
                    .min_by_key(|e| e.rank)
                    .map(|e| e.tokens.clone())
                    .unwrap_or_default()
            })
            .collect()
    }
}

/// Scores a hypothesis given its source sentence.
pub trait HypothesisScorer {
    /// Length-normalised log-probability (per predicted token, `</s>` included).
    fn score(&self, source: &[String], hypothesis: &[String]) -> Result<f64>;
}

impl<T: Real> HypothesisScorer for Seq2Seq<T> {
    fn score(&self, source: &[String], hypothesis: &[String]) -> Result<f64> {
        let src = self.src_vocab.encode(source);
        let tgt = self.tgt_vocab.encode(hypothesis);
        let lp = self.sentence_logprob(&src, &tgt)?.as_f64();
        Ok(lp / (tgt.len() + 1) as f64)
    }
}

impl<T: Real> HypothesisScorer for Ensemble<'_, T> {
    fn score(&self, source: &[String], hypothesis: &[String]) -> Result<f64> {
        let first = self.first();
        let src = first.src_vocab.encode(source);
        let tgt = first.tgt_vocab.encode(hypothesis);
        Ok(self.sequence_logprob(&src, &tgt)? / (tgt.len() + 1) as f64)
    }
}

impl<T: Real> HypothesisScorer for LanguageModel<T> {
    fn score(&self, _source: &[String], hypothesis: &[String]) -> Result<f64> {
        let tgt = self.vocab().encode(hypothesis);
        Ok(lm_sentence_logprob(self, &tgt)?.as_f64() / (tgt.len() + 1) as f64)
    }
}

/// Errors unless every sentence id indexes one of `n` aligned lines.
fn check_ids(nbest: &NBestList, n: usize, what: &str) -> Result<()> {
    match nbest.sentences.iter().find(|s| s.id >= n) {
        Some(s) => Err(Error::InvalidConfig(format!(
            "n-best sentence id {} has no {what} line ({n} given)",
            s.id
        ))),
        None => Ok(()),
    }
}

/// Spreads one row per n-best sentence onto `n` id-indexed lines; ids
/// without a sentence get an empty row.
pub fn align_by_id(nbest: &NBestList, rows: Vec<Vec<String>>, n: usize) -> Result<Vec<Vec<String>>> {
    check_ids(nbest, n, "output")?;
    let mut out = vec![Vec::new(); n];
    for (s, row) in nbest.sentences.iter().zip(rows) {
        out[s.id] = row;
    }
    Ok(out)
}

/// Adds (or overwrites) feature `name` on every entry.
///
/// Sentence ids index `sources` (line `id` holds that sentence's source);
/// pass `None` for scorers that ignore the source.
pub fn add_feature(
    nbest: &mut NBestList,
    sources: Option<&[Vec<String>]>,
    scorer: &dyn HypothesisScorer,
    name: &str,
) -> Result<()> {
    if name == EXTERNAL {
        return Err(Error::InvalidConfig(format!("`{EXTERNAL}` is reserved")));
    }
    if let Some(src) = sources {
        check_ids(nbest, src.len(), "source")?;
    }
    for sent in nbest.sentences.iter_mut() {
        let source: &[String] = sources.map_or(&[], |s| &s[sent.id]);
        for e in &mut sent.entries {
            if e.tokens.is_empty() {
                return Err(Error::Parse {
                    line: e.line,
                    message: format!("empty hypothesis for sentence {}", sent.id),
                });
            }
            let value = scorer.score(source, &e.tokens).map_err(|err| Error::Parse {
                line: e.line,
                message: format!("cannot score hypothesis for sentence {}: {err}", sent.id),
            })?;
            e.features.insert(name.to_string(), value);
        }
    }
    Ok(())
}

fn weighted(entry: &NBestEntry, names: &[&str], weights: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for (name, w) in names.iter().zip(weights) {
        let f = entry
            .feature(name)
            .ok_or_else(|| Error::MissingFeature((*name).to_string()))?;
        s += w * f;
    }
    Ok(s)
}

/// Index of the best entry of each sentence under `Σ wᵢ fᵢ`; ties go to
/// the better origin rank.
pub fn rerank_indices(nbest: &NBestList, names: &[&str], weights: &[f64]) -> Result<Vec<usize>> {
    if names.len() != weights.len() {
        return Err(Error::InvalidConfig(format!(
            "{} feature names but {} weights",
            names.len(),
            weights.len()
        )));
    }
    let mut out = Vec::with_capacity(nbest.len());
    for sent in &nbest.sentences {
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, e) in sent.entries.iter().enumerate() {
            let s = weighted(e, names, weights)?;
            let better = match best {
                None => true,
                Some((bs, brank, _)) => s > bs || (s == bs && e.rank < brank),
            };
            if better {
                best = Some((s, e.rank, i));
            }
        }
        out.push(best.map_or(0, |b| b.2));
    }
    Ok(out)
}

/// The 1-best hypothesis of each sentence under the weights.
pub fn rerank(nbest: &NBestList, names: &[&str], weights: &[f64]) -> Result<Vec<Vec<String>>> {
    let idx = rerank_indices(nbest, names, weights)?;
    Ok(nbest
        .sentences
        .iter()
        .zip(idx)
        .map(|(s, i)| s.entries.get(i).map(|e| e.tokens.clone()).unwrap_or_default())
        .collect())
}

/// Every weight vector with components in `{0, step, 2·step, …}` summing to 1,
/// in lexicographic order of the integer multiples.
pub fn simplex_grid(features: usize, step: f64) -> Result<Vec<Vec<f64>>> {
    if features == 0 {
        return Err(Error::Empty("feature list"));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidConfig(format!("grid step {step} must lie in (0, 1]")));
    }
    let units = num_traits::Float::round(1.0 / step) as usize;
    if units == 0 || num_traits::Float::abs(units as f64 * step - 1.0) > 1e-9 {
        return Err(Error::InvalidConfig(format!("grid step {step} must divide 1")));
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(features);
    compositions(units, features, &mut current, &mut out);
    Ok(out
        .into_iter()
        .map(|c| c.into_iter().map(|k| k as f64 / units as f64).collect())
        .collect())
}

fn compositions(left: usize, slots: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if slots == 1 {
        current.push(left);
        out.push(current.clone());
        current.pop();
        return;
    }
    for k in 0..=left {
        current.push(k);
        compositions(left - k, slots - 1, current, out);
        current.pop();
    }
}

/// Corpus BLEU of the reranked 1-best under `weights`. References are
/// indexed by sentence id; a reference without n-best entries scores
/// against an empty hypothesis.
pub fn reranked_bleu(nbest: &NBestList, references: &[Vec<String>], names: &[&str], weights: &[f64]) -> Result<f64> {
    let hyps = align_by_id(nbest, rerank(nbest, names, weights)?, references.len())?;
    Ok(corpus_stats(&hyps, references)?.score())
}

/// Grid search over `grid` for the weights maximising reranked dev BLEU.
/// Ties prefer more weight on [`EXTERNAL`] (when it is among `names`), then
/// the earlier grid point.
pub fn tune_weights_on(
    nbest: &NBestList,
    references: &[Vec<String>],
    names: &[&str],
    grid: &[Vec<f64>],
) -> Result<(Vec<f64>, f64)> {
    if grid.is_empty() {
        return Err(Error::Empty("weight grid"));
    }
    if references.is_empty() {
        return Err(Error::Empty("references"));
    }
    check_ids(nbest, references.len(), "reference")?;
    let ext = names.iter().position(|n| *n == EXTERNAL);
    // per-sentence statistics are cached per chosen entry
    let cache: Vec<Vec<BleuStats>> = nbest
        .sentences
        .iter()
        .map(|s| s.entries.iter().map(|e| BleuStats::sentence(&e.tokens, &references[s.id])).collect())
        .collect();
    // references with no n-best entries contribute an empty hypothesis
    let mut covered = vec![false; references.len()];
    for s in &nbest.sentences {
        covered[s.id] = true;
    }
    let mut uncovered = BleuStats::default();
    for (r, _) in references.iter().zip(&covered).filter(|(_, c)| !**c) {
        uncovered.add(&BleuStats::sentence::<String>(&[], r));
    }
    let mut best: Option<(f64, f64, &Vec<f64>)> = None;
    for w in grid {
        let idx = rerank_indices(nbest, names, w)?;
        let mut stats = uncovered;
        for (k, i) in idx.into_iter().enumerate() {
            if let Some(st) = cache[k].get(i) {
                stats.add(st);
            }
        }
        let score = stats.score();
        let ext_w = ext.map_or(0.0, |e| w[e]);
        let better = match best {
            None => true,
            Some((bs, bext, _)) => score > bs || (score == bs && ext_w > bext),
        };
        if better {
            best = Some((score, ext_w, w));
        }
    }
    let (score, _, w) = best.expect("grid is non-empty");
    Ok((w.clone(), score))
}

/// [`tune_weights_on`] over [`simplex_grid`]`(names.len(), step)`.
pub fn tune_weights(nbest: &NBestList, references: &[Vec<String>], names: &[&str], step: f64) -> Result<Vec<f64>> {
    let grid = simplex_grid(names.len(), step)?;
    Ok(tune_weights_on(nbest, references, names, &grid)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "0 ||| a b ||| lm=-1.5 ||| -3\n0 ||| a c ||| lm=-0.5 ||| -4\n1 ||| x ||| lm=-2 ||| -1\n";

    #[test]
    fn parse_and_write_roundtrip() {
        let nb = NBestList::parse(SAMPLE).unwrap();
        assert_eq!(nb.len(), 2);
        assert_eq!(nb.sentences[0].entries[1].rank, 2);
        assert_eq!(nb.sentences[0].entries[1].feature(EXTERNAL), Some(-4.0));
        assert_eq!(NBestList::parse(&nb.to_text()).unwrap(), nb);
    }

    #[test]
    fn parse_errors_cite_lines() {
        let err = NBestList::parse("0 ||| a ||| f=1 ||| 2\n0 ||| a ||| f=x ||| 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn rerank_corners_and_ties() {
        let nb = NBestList::parse(SAMPLE).unwrap();
        let ext = rerank(&nb, &[EXTERNAL, "lm"], &[1.0, 0.0]).unwrap();
        assert_eq!(ext, nb.external_one_best());
        let lm = rerank(&nb, &["lm"], &[1.0]).unwrap();
        assert_eq!(lm[0], ["a", "c"]);
        let flat = rerank(&nb, &["lm"], &[0.0]).unwrap();
        assert_eq!(flat, nb.external_one_best());
        assert!(matches!(
            rerank(&nb, &["nmt"], &[1.0]),
            Err(Error::MissingFeature(name)) if name == "nmt"
        ));
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(simplex_grid(2, 0.1).unwrap().len(), 11);
        assert_eq!(simplex_grid(3, 0.1).unwrap().len(), 66);
        assert_eq!(simplex_grid(1, 0.1).unwrap(), [[1.0]]);
        assert!(simplex_grid(0, 0.1).is_err());
        assert!(simplex_grid(2, 0.3).is_err());
    }

    #[test]
    fn single_feature_gets_full_weight() {
        let nb = NBestList::parse(SAMPLE).unwrap();
        let refs = [vec!["a".to_string(), "c".to_string()], vec!["x".to_string()]];
        assert_eq!(tune_weights(&nb, &refs, &["lm"], 0.1).unwrap(), [1.0]);
    }
}
