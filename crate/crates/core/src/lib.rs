//! Core of `nmtx`: an LSTM encoder-decoder with local attention, a
//! reverse-mode gradient tape, and the machinery for training a low-resource
//! "child" translation model from a trained "parent".
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the CLI and
//! anything touching the filesystem live in the `nmtx` companion crate.

#![cfg_attr(not(test), no_std)]
// Index loops mirror the maths in the hand-written backward passes, and the
// `!(x > 0.0)` checks deliberately reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

extern crate alloc;

pub mod bleu;
pub mod decoder;
pub mod error;
pub mod lm;
pub mod model;
pub mod real;
pub mod rescore;
pub mod synth;
pub mod tensor;
pub mod trainer;
pub mod transfer;
pub mod vocab;

pub use error::{Error, Result};
pub use model::{BlockName, ModelConfig, ParameterBlocks, Seq2Seq};
pub use real::Real;
pub use tensor::Matrix;
pub use vocab::Vocabulary;

/// Seeded generator used everywhere a random stream is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's deterministic generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
