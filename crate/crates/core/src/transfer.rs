//! Parent-to-child transfer: weight copying, source-embedding assignment,
//! dictionary composition, and L2 regularisation toward the parent.
//!
//! A child model starts as a copy of a trained parent. Its source words are
//! new, so each child source type borrows the embedding row of some parent
//! source type, chosen either at random ([`random_assignment`]) or through a
//! bilingual dictionary ([`dictionary_assignment`]). Target words are shared
//! with the parent and are matched by name.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::model::{BlockName, ParameterBlocks, Seq2Seq};
use crate::real::Real;
use crate::tensor::Matrix;
use crate::vocab::{Vocabulary, SPECIALS};

pub use crate::model::FreezeMask;

/// Entries below this probability are dropped when composing tables.
pub const PRUNE_BELOW: f64 = 1e-6;

/// Total map from child source ids to parent source-embedding rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentMap {
    rows: Vec<usize>,
}

impl AssignmentMap {
    /// Validates that every row lies below `parent_rows`.
    pub fn new(rows: Vec<usize>, parent_rows: usize) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= parent_rows) {
            return Err(Error::IdOutOfRange {
                id: bad,
                size: parent_rows,
            });
        }
        Ok(AssignmentMap { rows })
    }

    /// `i ↦ i`, for a child that shares the parent's source vocabulary.
    pub fn identity(size: usize) -> Self {
        AssignmentMap {
            rows: (0..size).collect(),
        }
    }

    pub fn row(&self, child_id: usize) -> usize {
        self.rows[child_id]
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Sparse word-translation table `P(target type | source type)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TTable {
    rows: BTreeMap<String, BTreeMap<String, f64>>,
}

impl TTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `P(target | source)`; the probability must lie in `(0, 1]`.
    pub fn insert(&mut self, source: &str, target: &str, p: f64) -> Result<()> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidProbability {
                what: "t-table entry",
                value: p,
            });
        }
        self.rows
            .entry(source.to_string())
            .or_default()
            .insert(target.to_string(), p);
        Ok(())
    }

    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, &'a str, f64)>) -> Result<Self> {
        let mut t = TTable::new();
        for (s, e, p) in entries {
            t.insert(s, e, p)?;
        }
        t.check_row_sums()?;
        Ok(t)
    }

    pub fn get(&self, source: &str, target: &str) -> Option<f64> {
        self.rows.get(source)?.get(target).copied()
    }

    /// Translations of `source`, sorted by target name.
    pub fn row(&self, source: &str) -> Option<&BTreeMap<String, f64>> {
        self.rows.get(source)
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.rows
            .iter()
            .flat_map(|(s, row)| row.iter().map(move |(t, &p)| (s.as_str(), t.as_str(), p)))
    }

    /// Number of stored entries.
    pub fn len(&self) -> usize {
        self.rows.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Most probable translation of `source`; ties go to the smaller name.
    pub fn best(&self, source: &str) -> Option<(&str, f64)> {
        let mut best: Option<(&str, f64)> = None;
        for (t, &p) in self.rows.get(source)? {
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((t, p));
            }
        }
        best
    }

    /// Every source row must sum to at most `1 + 1e-3`.
    pub fn check_row_sums(&self) -> Result<()> {
        for (s, row) in &self.rows {
            let total: f64 = row.values().sum();
            if total > 1.0 + 1e-3 {
                log::warn!("t-table row `{s}` sums to {total}");
                return Err(Error::InvalidProbability {
                    what: "t-table row sum",
                    value: total,
                });
            }
        }
        Ok(())
    }

    /// Parses `source target probability` lines; blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut t = TTable::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
            }
            let p: f64 = fields[2]
                .parse()
                .map_err(|_| parse_err(format!("bad probability `{}`", fields[2])))?;
            t.insert(fields[0], fields[1], p)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        t.check_row_sums()?;
        Ok(t)
    }

    /// One `source target probability` line per entry, sorted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, t, p) in self.iter() {
            out.push_str(&format!("{s} {t} {p}\n"));
        }
        out
    }
}

/// `P(parent | child) = Σ_pivot P(pivot | child) · P(parent | pivot)`,
/// dropping entries below [`PRUNE_BELOW`].
pub fn compose_ttables(child_to_pivot: &TTable, pivot_to_parent: &TTable) -> TTable {
    let mut out = TTable::new();
    for (child, row) in &child_to_pivot.rows {
        let mut acc: BTreeMap<&str, f64> = BTreeMap::new();
        for (pivot, &p) in row {
            if let Some(next) = pivot_to_parent.rows.get(pivot) {
                for (parent, &q) in next {
                    *acc.entry(parent.as_str()).or_insert(0.0) += p * q;
                }
            }
        }
        let kept: BTreeMap<String, f64> = acc
            .into_iter()
            .filter(|&(_, p)| p >= PRUNE_BELOW)
            .map(|(k, p)| (k.to_string(), p.min(1.0)))
            .collect();
        if !kept.is_empty() {
            out.rows.insert(child.clone(), kept);
        }
    }
    out
}

/// Maps every child source type to a uniformly random parent row.
///
/// The reserved ids keep their own rows when the parent has them, so `<unk>`
/// stays `<unk>`. The draws are made in child-id order from `seed`.
pub fn random_assignment(child_src: &Vocabulary, parent_rows: usize, seed: u64) -> Result<AssignmentMap> {
    if parent_rows == 0 {
        return Err(Error::Empty("parent source vocabulary"));
    }
    let mut rng = crate::seeded_rng(seed);
    let keep_specials = parent_rows >= SPECIALS.len();
    let rows = (0..child_src.len())
        .map(|i| {
            if keep_specials && i < SPECIALS.len() {
                i
            } else {
                rng.gen_range(0..parent_rows)
            }
        })
        .collect();
    AssignmentMap::new(rows, parent_rows)
}

/// Maps each child source type to the parent row of its most probable
/// translation under `composed`; exact ties go to the lower parent id.
/// Types the table cannot place fall back to [`random_assignment`] with the
/// same `seed`.
pub fn dictionary_assignment(
    composed: &TTable,
    child_src: &Vocabulary,
    parent_src: &Vocabulary,
    seed: u64,
) -> Result<AssignmentMap> {
    let fallback = random_assignment(child_src, parent_src.len(), seed)?;
    let mut rows = fallback.rows;
    let mut placed = 0usize;
    for (k, name) in child_src.types().iter().enumerate() {
        let Some(row) = composed.row(name) else { continue };
        let mut best: Option<(f64, usize)> = None;
        for (target, &p) in row {
            let Some(pid) = parent_src.get(target) else { continue };
            let better = match best {
                None => true,
                Some((bp, bid)) => p > bp || (p == bp && pid < bid),
            };
            if better {
                best = Some((p, pid));
            }
        }
        if let Some((_, pid)) = best {
            rows[SPECIALS.len() + k] = pid;
            placed += 1;
        }
    }
    log::debug!(
        "dictionary assignment placed {placed} of {} child types",
        child_src.types().len()
    );
    AssignmentMap::new(rows, parent_src.len())
}

/// Builds a child model from `parent`.
///
/// Non-embedding blocks are copied verbatim. Child source row `i` takes
/// parent row `assignment.row(i)`. Target rows are copied by type name;
/// target types the parent lacks are freshly initialised from `rng` using
/// the child config's `init_range`. The child config's hidden size must
/// equal the parent's.
pub fn transfer_init<T: Real>(
    parent: &Seq2Seq<T>,
    mut child_config: crate::ModelConfig,
    child_src: Vocabulary,
    child_tgt: Vocabulary,
    assignment: &AssignmentMap,
    rng: &mut crate::Rng,
) -> Result<Seq2Seq<T>> {
    let d = parent.hidden();
    if child_config.hidden_size != d {
        return Err(Error::HiddenSizeMismatch {
            expected: d,
            found: child_config.hidden_size,
        });
    }
    if assignment.len() != child_src.len() {
        return Err(Error::VocabularyMismatch(format!(
            "assignment covers {} types but the child source vocabulary has {}",
            assignment.len(),
            child_src.len()
        )));
    }
    if let Some(&bad) = assignment.rows().iter().find(|&&r| r >= parent.src_vocab.len()) {
        return Err(Error::IdOutOfRange {
            id: bad,
            size: parent.src_vocab.len(),
        });
    }
    child_config.src_vocab_size = child_src.len();
    child_config.tgt_vocab_size = child_tgt.len();
    child_config.attention = parent.config.attention;
    child_config.attention_window = parent.config.attention_window;
    if child_config.parent.is_none() {
        child_config.parent = Some("parent".into());
    }
    child_config.validate()?;

    let pp = &parent.params;
    let mut source_embeddings = Matrix::zeros(child_src.len(), d);
    for i in 0..child_src.len() {
        source_embeddings
            .row_mut(i)
            .copy_from_slice(pp.source_embeddings.row(assignment.row(i)));
    }

    let mut params = ParameterBlocks {
        source_embeddings,
        source_rnn: pp.source_rnn.clone(),
        target_rnn: pp.target_rnn.clone(),
        target_attention: pp.target_attention.clone(),
        target_input_embeddings: Matrix::zeros(child_tgt.len(), d),
        target_output_embeddings: crate::model::OutputLayer {
            w: Matrix::zeros(d, child_tgt.len()),
            b: Matrix::zeros(1, child_tgt.len()),
        },
    };
    let matches = match_target_types(&parent.tgt_vocab, &child_tgt);
    copy_target_side(
        &mut params,
        &pp.target_input_embeddings,
        &pp.target_output_embeddings,
        &matches,
        child_config.init_range,
        rng,
    );
    Seq2Seq::from_parts(child_config, child_src, child_tgt, params)
}

/// For each child target id, the parent id with the same surface form.
fn match_target_types(parent: &Vocabulary, child: &Vocabulary) -> Vec<Option<usize>> {
    (0..child.len())
        .map(|j| child.token(j).and_then(|name| parent.get(name)))
        .collect()
}

fn copy_target_side<T: Real>(
    params: &mut ParameterBlocks<T>,
    input: &Matrix<T>,
    output: &crate::model::OutputLayer<T>,
    matches: &[Option<usize>],
    init_range: f64,
    rng: &mut crate::Rng,
) {
    let d = params.hidden();
    let v = matches.len();
    let out = &mut params.target_output_embeddings;
    for (j, m) in matches.iter().enumerate() {
        match *m {
            Some(pj) => {
                params.target_input_embeddings.row_mut(j).copy_from_slice(input.row(pj));
                for r in 0..d {
                    out.w.set(r, j, output.w.get(r, pj));
                }
                out.b.set(0, j, output.b.get(0, pj));
            }
            None => {
                fill_uniform_row(params.target_input_embeddings.row_mut(j), init_range, rng);
                for r in 0..d {
                    out.w.set(r, j, T::of(sample(init_range, rng)));
                }
                out.b.set(0, j, T::of(sample(init_range, rng)));
            }
        }
    }
    let fresh = matches.iter().filter(|m| m.is_none()).count();
    if fresh > 0 {
        log::debug!("{fresh} of {v} child target types have no parent counterpart");
    }
}

fn sample(range: f64, rng: &mut crate::Rng) -> f64 {
    if range > 0.0 {
        rng.gen_range(-range..=range)
    } else {
        0.0
    }
}

fn fill_uniform_row<T: Real>(row: &mut [T], range: f64, rng: &mut crate::Rng) {
    for x in row {
        *x = T::of(sample(range, rng));
    }
}

/// Adds `λ(θ − θ_parent)` to the gradient of every block not frozen in `mask`.
pub fn l2_toward_parent<T: Real>(
    grads: &mut ParameterBlocks<T>,
    params: &ParameterBlocks<T>,
    parent: &ParameterBlocks<T>,
    lambda: T,
    mask: &FreezeMask,
) -> Result<()> {
    if lambda < T::zero() {
        return Err(Error::InvalidConfig("l2 lambda must be nonnegative".into()));
    }
    params.check_same_shape(parent, "l2_toward_parent")?;
    params.check_same_shape(grads, "l2_toward_parent")?;
    if lambda == T::zero() {
        return Ok(());
    }
    for block in BlockName::ALL {
        if mask.is_frozen(block) {
            continue;
        }
        let theta = params.block(block);
        let anchor = parent.block(block);
        for (g, ((_, t), (_, a))) in grads.block_mut(block).into_iter().zip(theta.iter().zip(&anchor)) {
            for ((gi, &ti), &ai) in g.as_mut_slice().iter_mut().zip(t.as_slice()).zip(a.as_slice()) {
                *gi += lambda * (ti - ai);
            }
        }
    }
    Ok(())
}

/// Seeds a child's target side from a language model.
///
/// The LM's two LSTM layers become `target_rnn`, its hidden-to-output
/// projection becomes the `h` half of the attention combiner, and its
/// embeddings are copied into the target input/output blocks by type name.
/// Everything else (source side, attention position network, the context
/// half of the combiner, unmatched target types) keeps the skeleton's
/// fresh values.
pub fn lm_as_parent<T: Real>(lm: &LanguageModel<T>, mut skeleton: Seq2Seq<T>) -> Result<Seq2Seq<T>> {
    let d = skeleton.hidden();
    if lm.hidden() != d {
        return Err(Error::HiddenSizeMismatch {
            expected: d,
            found: lm.hidden(),
        });
    }
    let src = lm.params();
    let dst = &mut skeleton.params;
    dst.target_rnn = src.target_rnn.clone();
    let combiner = &mut dst.target_attention.combiner;
    for r in 0..d {
        combiner
            .row_mut(d + r)
            .copy_from_slice(src.target_attention.combiner.row(d + r));
    }
    let matches = match_target_types(lm.vocab(), &skeleton.tgt_vocab);
    let out = &mut dst.target_output_embeddings;
    for (j, m) in matches.iter().enumerate() {
        if let Some(pj) = *m {
            dst.target_input_embeddings
                .row_mut(j)
                .copy_from_slice(src.target_input_embeddings.row(pj));
            for r in 0..d {
                out.w.set(r, j, src.target_output_embeddings.w.get(r, pj));
            }
            out.b.set(0, j, src.target_output_embeddings.b.get(0, pj));
        }
    }
    let dropped = lm
        .vocab()
        .types()
        .iter()
        .filter(|t| skeleton.tgt_vocab.get(t).is_none())
        .count();
    if dropped > 0 {
        log::info!("{dropped} language-model types are absent from the child vocabulary and were dropped");
    }
    skeleton.config.parent = Some("language-model".into());
    Ok(skeleton)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(entries: &[(&str, &str, f64)]) -> TTable {
        TTable::from_entries(entries.iter().copied()).unwrap()
    }

    #[test]
    fn compose_chain_and_linearity() {
        let c = compose_ttables(&table(&[("a", "e", 1.0)]), &table(&[("e", "f", 1.0)]));
        assert_eq!(c.get("a", "f"), Some(1.0));
        assert_eq!(c.len(), 1);

        let c = compose_ttables(
            &table(&[("a", "e1", 0.5), ("a", "e2", 0.5)]),
            &table(&[("e1", "f", 1.0), ("e2", "g", 1.0)]),
        );
        assert_eq!(c.get("a", "f"), Some(0.5));
        assert_eq!(c.get("a", "g"), Some(0.5));
    }

    #[test]
    fn compose_prunes_and_skips_missing_pivots() {
        let c = compose_ttables(
            &table(&[("a", "e", 1e-4), ("a", "x", 0.5)]),
            &table(&[("e", "f", 1e-3)]),
        );
        assert!(c.is_empty());
    }

    #[test]
    fn ttable_rejects_bad_probabilities() {
        let mut t = TTable::new();
        assert!(t.insert("a", "b", 0.0).is_err());
        assert!(t.insert("a", "b", 1.5).is_err());
        assert!(TTable::from_entries([("a", "b", 0.7), ("a", "c", 0.7)]).is_err());
    }

    #[test]
    fn ttable_text_roundtrip() {
        let t = table(&[("kitob", "book", 0.9), ("kitob", "volume", 0.05), ("uy", "house", 1.0)]);
        let back = TTable::parse(&t.to_text()).unwrap();
        assert_eq!(back, t);
        let err = TTable::parse("a b 0.5\nbroken line\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn random_assignment_contracts() {
        let child = Vocabulary::from_types(["x", "y", "z"]).unwrap();
        let m = random_assignment(&child, 1, 3).unwrap();
        assert!(m.rows().iter().all(|&r| r == 0));
        assert_eq!(random_assignment(&child, 50, 9), random_assignment(&child, 50, 9));
        let m = random_assignment(&child, 50, 9).unwrap();
        assert_eq!(&m.rows()[..4], &[0, 1, 2, 3]);
        assert!(random_assignment(&child, 0, 1).is_err());
    }

    #[test]
    fn dictionary_argmax_tie_and_fallback() {
        let child = Vocabulary::from_types(["a", "b", "c"]).unwrap();
        let parent = Vocabulary::from_types(["f", "g", "h"]).unwrap();
        let composed = table(&[("a", "f", 0.1), ("a", "g", 0.9), ("b", "h", 0.5), ("b", "f", 0.5)]);
        let m = dictionary_assignment(&composed, &child, &parent, 11).unwrap();
        let rnd = random_assignment(&child, parent.len(), 11).unwrap();
        assert_eq!(m.row(child.id("a")), parent.id("g"));
        assert_eq!(m.row(child.id("b")), parent.id("f"));
        assert_eq!(m.row(child.id("c")), rnd.row(child.id("c")));
    }

    #[test]
    fn l2_scalar_case() {
        let mut p = ParameterBlocks::<f64>::zeros(1, 4, 4);
        let mut anchor = p.clone();
        p.source_embeddings.set(0, 0, 2.0);
        anchor.source_embeddings.set(0, 0, 1.0);
        let mut g = p.zeros_like();
        l2_toward_parent(&mut g, &p, &anchor, 0.1, &FreezeMask::none()).unwrap();
        assert!((g.source_embeddings.get(0, 0) - 0.1).abs() < 1e-12);

        let mut g = p.zeros_like();
        l2_toward_parent(&mut g, &p, &anchor, 0.0, &FreezeMask::none()).unwrap();
        assert_eq!(g, p.zeros_like());

        let mut g = p.zeros_like();
        let mask = FreezeMask::of(&[BlockName::SourceEmbeddings]);
        l2_toward_parent(&mut g, &p, &anchor, 0.1, &mask).unwrap();
        assert_eq!(g, p.zeros_like());

        let mut g = p.zeros_like();
        l2_toward_parent(&mut g, &p, &p, 0.3, &FreezeMask::none()).unwrap();
        assert_eq!(g, p.zeros_like());
    }
}
