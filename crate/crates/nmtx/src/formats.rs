//! Plain-text formats: corpora, vocabularies, translation tables, n-best
//! lists, `key=value` files and learning curves.

use std::fs;
use std::path::Path;

use nmtx_core::rescore::NBestList;
use nmtx_core::synth::{Sentence, TextPair};
use nmtx_core::trainer::LearningCurve;
use nmtx_core::transfer::TTable;
use nmtx_core::Vocabulary;

use crate::atomic::write_atomic_str;
use crate::error::{NmtxError, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| NmtxError::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> NmtxError {
    NmtxError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Re-labels a core parse error with the file it came from.
fn with_path(path: &Path, e: nmtx_core::Error) -> NmtxError {
    match e {
        nmtx_core::Error::Parse { line, message } => parse_error(path, line, message),
        other => NmtxError::Core(other),
    }
}

// ---------------------------------------------------------------- corpora

/// Whitespace-tokenised sentences, one per line. Empty lines give empty sentences.
pub fn parse_corpus(text: &str) -> Vec<Sentence> {
    text.lines()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect()
}

pub fn read_corpus(path: &Path) -> Result<Vec<Sentence>> {
    Ok(parse_corpus(&read_text(path)?))
}

pub fn corpus_to_text(corpus: &[Sentence]) -> String {
    let mut out = String::new();
    for s in corpus {
        out.push_str(&s.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_corpus(path: &Path, corpus: &[Sentence]) -> Result<()> {
    write_atomic_str(path, &corpus_to_text(corpus))
}

/// Reads a line-aligned parallel corpus. Both sides of every pair must be
/// non-empty and the files must have the same number of lines.
pub fn read_parallel(src: &Path, tgt: &Path) -> Result<Vec<TextPair>> {
    let s = read_corpus(src)?;
    let t = read_corpus(tgt)?;
    if s.len() != t.len() {
        return Err(parse_error(
            tgt,
            t.len().min(s.len()) + 1,
            format!("{} has {} lines but {} has {}", src.display(), s.len(), tgt.display(), t.len()),
        ));
    }
    for (i, (a, b)) in s.iter().zip(&t).enumerate() {
        if a.is_empty() {
            return Err(parse_error(src, i + 1, "empty sentence"));
        }
        if b.is_empty() {
            return Err(parse_error(tgt, i + 1, "empty sentence"));
        }
    }
    Ok(s.into_iter().zip(t).collect())
}

pub fn write_parallel(src: &Path, tgt: &Path, pairs: &[TextPair]) -> Result<()> {
    let (s, t): (Vec<Sentence>, Vec<Sentence>) = pairs.iter().cloned().unzip();
    write_corpus(src, &s)?;
    write_corpus(tgt, &t)
}

// ------------------------------------------------------------ vocabularies

/// One type per line; line `k` (0-based) holds id `4 + k`, after the
/// reserved ids.
pub fn vocab_to_text(vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for t in vocab.types() {
        out.push_str(t);
        out.push('\n');
    }
    out
}

pub fn parse_vocab(text: &str, path: &Path) -> Result<Vocabulary> {
    let mut types = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.split_whitespace().count() != 1 {
            return Err(parse_error(path, i + 1, "expected exactly one type per line"));
        }
        types.push(t);
    }
    Vocabulary::from_types(types).map_err(|e| with_path(path, e))
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary> {
    parse_vocab(&read_text(path)?, path)
}

pub fn write_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    write_atomic_str(path, &vocab_to_text(vocab))
}

// ------------------------------------------------------- translation tables

pub fn read_ttable(path: &Path) -> Result<TTable> {
    TTable::parse(&read_text(path)?).map_err(|e| with_path(path, e))
}

pub fn write_ttable(path: &Path, table: &TTable) -> Result<()> {
    write_atomic_str(path, &table.to_text())
}

// -------------------------------------------------------------- n-best lists

pub fn read_nbest(path: &Path) -> Result<NBestList> {
    NBestList::parse(&read_text(path)?).map_err(|e| with_path(path, e))
}

pub fn write_nbest(path: &Path, nbest: &NBestList) -> Result<()> {
    write_atomic_str(path, &nbest.to_text())
}

// ------------------------------------------------------------ key=value files

/// One `key=value` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// `key=value` pairs in file order. Blank lines and `#` comments are
/// skipped; whitespace around keys and values is trimmed; a repeated key
/// is an error.
pub fn parse_kv(text: &str, path: &Path) -> Result<Vec<KvEntry>> {
    let mut out: Vec<KvEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_error(path, i + 1, format!("`{line}` is not key=value")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(parse_error(path, i + 1, "empty key"));
        }
        if out.iter().any(|e| e.key == k) {
            return Err(parse_error(path, i + 1, format!("key `{k}` given twice")));
        }
        out.push(KvEntry {
            line: i + 1,
            key: k.to_string(),
            value: v.to_string(),
        });
    }
    Ok(out)
}

pub fn kv_to_text(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Feature weights, e.g. `external=0.7` / `nmt=0.3`.
pub fn read_weights(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = read_text(path)?;
    let kv = parse_kv(&text, path)?;
    if kv.is_empty() {
        return Err(parse_error(path, 1, "no weights"));
    }
    kv.into_iter()
        .map(|e| match e.value.parse::<f64>() {
            Ok(w) if w.is_finite() => Ok((e.key, w)),
            _ => Err(parse_error(
                path,
                e.line,
                format!("weight `{}` has a bad value `{}`", e.key, e.value),
            )),
        })
        .collect()
}

pub fn write_weights(path: &Path, weights: &[(String, f64)]) -> Result<()> {
    let kv: Vec<(String, String)> = weights.iter().map(|(k, w)| (k.clone(), w.to_string())).collect();
    write_atomic_str(path, &kv_to_text(&kv))
}

// ---------------------------------------------------------- learning curves

pub const CURVE_HEADER: &str = "epoch,train_ppl,dev_ppl,lr,seconds";

pub fn curve_to_csv(curve: &LearningCurve) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in &curve.records {
        out.push_str(&format!("{},{},{},{},{:.3}\n", r.epoch, r.train_ppl, r.dev_ppl, r.lr, r.seconds));
    }
    out
}

pub fn write_curve(path: &Path, curve: &LearningCurve) -> Result<()> {
    write_atomic_str(path, &curve_to_csv(curve))
}
