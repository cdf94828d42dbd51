#![allow(dead_code)]

use nmtx_core::model::{init_params, ModelConfig};
use nmtx_core::{seeded_rng, Real, Seq2Seq, Vocabulary};
use rand::Rng;

pub fn vocab(n: usize, prefix: &str) -> Vocabulary {
    Vocabulary::from_types((0..n).map(|i| format!("{prefix}{i}"))).unwrap()
}

/// Small random model with `init_range` large enough for non-trivial gradients.
pub fn tiny_model<T: Real>(hidden: usize, src: usize, tgt: usize, range: f64, seed: u64) -> Seq2Seq<T> {
    let mut cfg = ModelConfig::desk(src + 4, tgt + 4);
    cfg.hidden_size = hidden;
    cfg.init_range = range;
    let mut rng = seeded_rng(seed);
    let params = init_params(&cfg, &mut rng).unwrap();
    Seq2Seq::from_parts(cfg, vocab(src, "s"), vocab(tgt, "t"), params).unwrap()
}

/// Random sentence of ordinary (non-reserved) ids.
pub fn sentence(rng: &mut impl Rng, vocab_size: usize, min: usize, max: usize) -> Vec<usize> {
    let len = rng.gen_range(min..=max);
    (0..len).map(|_| rng.gen_range(4..vocab_size)).collect()
}
