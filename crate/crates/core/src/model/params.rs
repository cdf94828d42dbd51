use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{LstmParams, Matrix};

/// The six named parameter groups of the translation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlockName {
    SourceEmbeddings,
    SourceRnn,
    TargetRnn,
    TargetAttention,
    TargetInputEmbeddings,
    TargetOutputEmbeddings,
}

impl BlockName {
    pub const ALL: [BlockName; 6] = [
        BlockName::SourceEmbeddings,
        BlockName::SourceRnn,
        BlockName::TargetRnn,
        BlockName::TargetAttention,
        BlockName::TargetInputEmbeddings,
        BlockName::TargetOutputEmbeddings,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BlockName::SourceEmbeddings => "source_embeddings",
            BlockName::SourceRnn => "source_rnn",
            BlockName::TargetRnn => "target_rnn",
            BlockName::TargetAttention => "target_attention",
            BlockName::TargetInputEmbeddings => "target_input_embeddings",
            BlockName::TargetOutputEmbeddings => "target_output_embeddings",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for BlockName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlockName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BlockName::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::UnknownBlock(s.into()))
    }
}

/// Per-block trainability flags; `true` means frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FreezeMask {
    frozen: [bool; 6],
}

impl FreezeMask {
    /// Everything trainable.
    pub fn none() -> Self {
        FreezeMask { frozen: [false; 6] }
    }

    pub fn all() -> Self {
        FreezeMask { frozen: [true; 6] }
    }

    /// The main child setting: target input and output embeddings fixed,
    /// everything else retrained.
    pub fn child_default() -> Self {
        Self::of(&[BlockName::TargetInputEmbeddings, BlockName::TargetOutputEmbeddings])
    }

    /// Freezes exactly `blocks`.
    pub fn of(blocks: &[BlockName]) -> Self {
        let mut m = Self::none();
        for &b in blocks {
            m.frozen[b.index()] = true;
        }
        m
    }

    pub fn with(mut self, block: BlockName, frozen: bool) -> Self {
        self.frozen[block.index()] = frozen;
        self
    }

    pub fn is_frozen(&self, block: BlockName) -> bool {
        self.frozen[block.index()]
    }

    pub fn frozen_blocks(&self) -> Vec<BlockName> {
        BlockName::ALL.into_iter().filter(|b| self.is_frozen(*b)).collect()
    }

    /// Parses a comma-separated list of block names.
    pub fn parse_list(list: &str) -> Result<Self> {
        let mut blocks = Vec::new();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            blocks.push(name.parse()?);
        }
        Ok(Self::of(&blocks))
    }

    /// The cumulative unfreezing ladder: entry `k` retrains the first `k`
    /// blocks of [`BlockName::ALL`] and freezes the rest. Entry 0 retrains
    /// nothing, entry 6 retrains everything.
    pub fn ladder() -> [FreezeMask; 7] {
        let mut out = [FreezeMask::all(); 7];
        for (k, mask) in out.iter_mut().enumerate() {
            for b in &BlockName::ALL[..k] {
                *mask = mask.with(*b, false);
            }
        }
        out
    }
}

/// Position network and output combiner of the attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    /// `d x d`
    pub position_w: Matrix<T>,
    /// `d x 1`
    pub position_v: Matrix<T>,
    /// `2d x d`, applied to `[context | h]`
    pub combiner: Matrix<T>,
}

/// Softmax layer: `d x |V|` weights and a `1 x |V|` bias.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputLayer<T> {
    pub w: Matrix<T>,
    pub b: Matrix<T>,
}

/// All weights of the translation model, grouped into six blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBlocks<T> {
    /// `|V_src| x d`
    pub source_embeddings: Matrix<T>,
    pub source_rnn: [LstmParams<T>; 2],
    /// Layer 0 takes `[embedding | previous attentional vector]`.
    pub target_rnn: [LstmParams<T>; 2],
    pub target_attention: AttentionParams<T>,
    /// `|V_tgt| x d`
    pub target_input_embeddings: Matrix<T>,
    pub target_output_embeddings: OutputLayer<T>,
}

impl<T: Real> ParameterBlocks<T> {
    pub fn zeros(hidden: usize, src_vocab: usize, tgt_vocab: usize) -> Self {
        let d = hidden;
        ParameterBlocks {
            source_embeddings: Matrix::zeros(src_vocab, d),
            source_rnn: [LstmParams::zeros(d, d), LstmParams::zeros(d, d)],
            target_rnn: [LstmParams::zeros(2 * d, d), LstmParams::zeros(d, d)],
            target_attention: AttentionParams {
                position_w: Matrix::zeros(d, d),
                position_v: Matrix::zeros(d, 1),
                combiner: Matrix::zeros(2 * d, d),
            },
            target_input_embeddings: Matrix::zeros(tgt_vocab, d),
            target_output_embeddings: OutputLayer {
                w: Matrix::zeros(d, tgt_vocab),
                b: Matrix::zeros(1, tgt_vocab),
            },
        }
    }

    /// Every value drawn uniformly from `[-range, range]`.
    pub fn uniform(hidden: usize, src_vocab: usize, tgt_vocab: usize, range: f64, rng: &mut crate::Rng) -> Self {
        let mut p = Self::zeros(hidden, src_vocab, tgt_vocab);
        for b in BlockName::ALL {
            for m in p.block_mut(b) {
                fill_uniform(m, range, rng);
            }
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.source_embeddings.cols()
    }

    /// Named tensors of one block, in canonical order.
    pub fn block(&self, name: BlockName) -> Vec<(&'static str, &Matrix<T>)> {
        match name {
            BlockName::SourceEmbeddings => vec![("table", &self.source_embeddings)],
            BlockName::SourceRnn => lstm_pair(&self.source_rnn),
            BlockName::TargetRnn => lstm_pair(&self.target_rnn),
            BlockName::TargetAttention => vec![
                ("position_w", &self.target_attention.position_w),
                ("position_v", &self.target_attention.position_v),
                ("combiner", &self.target_attention.combiner),
            ],
            BlockName::TargetInputEmbeddings => vec![("table", &self.target_input_embeddings)],
            BlockName::TargetOutputEmbeddings => vec![
                ("w", &self.target_output_embeddings.w),
                ("b", &self.target_output_embeddings.b),
            ],
        }
    }

    /// Mutable tensors of one block, same order as [`Self::block`].
    pub fn block_mut(&mut self, name: BlockName) -> Vec<&mut Matrix<T>> {
        match name {
            BlockName::SourceEmbeddings => vec![&mut self.source_embeddings],
            BlockName::SourceRnn => lstm_pair_mut(&mut self.source_rnn),
            BlockName::TargetRnn => lstm_pair_mut(&mut self.target_rnn),
            BlockName::TargetAttention => {
                let a = &mut self.target_attention;
                vec![&mut a.position_w, &mut a.position_v, &mut a.combiner]
            }
            BlockName::TargetInputEmbeddings => vec![&mut self.target_input_embeddings],
            BlockName::TargetOutputEmbeddings => {
                let o = &mut self.target_output_embeddings;
                vec![&mut o.w, &mut o.b]
            }
        }
    }

    /// All tensors in block order.
    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        BlockName::ALL
            .into_iter()
            .flat_map(|b| self.block(b).into_iter().map(|(_, m)| m))
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let ParameterBlocks {
            source_embeddings,
            source_rnn,
            target_rnn,
            target_attention,
            target_input_embeddings,
            target_output_embeddings,
        } = self;
        let mut out: Vec<&mut Matrix<T>> = vec![source_embeddings];
        out.extend(lstm_pair_mut(source_rnn));
        out.extend(lstm_pair_mut(target_rnn));
        out.push(&mut target_attention.position_w);
        out.push(&mut target_attention.position_v);
        out.push(&mut target_attention.combiner);
        out.push(target_input_embeddings);
        out.push(&mut target_output_embeddings.w);
        out.push(&mut target_output_embeddings.b);
        out
    }

    /// Block membership of each entry of [`Self::tensors`].
    pub fn tensor_blocks() -> Vec<BlockName> {
        let counts = [1, 4, 4, 3, 1, 2];
        BlockName::ALL
            .into_iter()
            .zip(counts)
            .flat_map(|(b, n)| core::iter::repeat_n(b, n))
            .collect()
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    /// Same-shaped zeros, for gradient accumulation.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for m in z.tensors_mut() {
            m.fill(T::zero());
        }
        z
    }

    pub fn cast<U: Real>(&self) -> ParameterBlocks<U> {
        let c = |l: &LstmParams<T>| LstmParams {
            w: l.w.cast(),
            b: l.b.cast(),
        };
        ParameterBlocks {
            source_embeddings: self.source_embeddings.cast(),
            source_rnn: [c(&self.source_rnn[0]), c(&self.source_rnn[1])],
            target_rnn: [c(&self.target_rnn[0]), c(&self.target_rnn[1])],
            target_attention: AttentionParams {
                position_w: self.target_attention.position_w.cast(),
                position_v: self.target_attention.position_v.cast(),
                combiner: self.target_attention.combiner.cast(),
            },
            target_input_embeddings: self.target_input_embeddings.cast(),
            target_output_embeddings: OutputLayer {
                w: self.target_output_embeddings.w.cast(),
                b: self.target_output_embeddings.b.cast(),
            },
        }
    }

    /// Checks that `other` has the same shapes tensor by tensor.
    pub fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        for (a, b) in self.tensors().into_iter().zip(other.tensors()) {
            b.check_shape(op, "grads", a.shape())?;
        }
        Ok(())
    }
}

fn lstm_pair<T>(p: &[LstmParams<T>; 2]) -> Vec<(&'static str, &Matrix<T>)> {
    vec![
        ("layer0.w", &p[0].w),
        ("layer0.b", &p[0].b),
        ("layer1.w", &p[1].w),
        ("layer1.b", &p[1].b),
    ]
}

fn lstm_pair_mut<T>(p: &mut [LstmParams<T>; 2]) -> Vec<&mut Matrix<T>> {
    let [l0, l1] = p;
    vec![&mut l0.w, &mut l0.b, &mut l1.w, &mut l1.b]
}

pub(crate) fn fill_uniform<T: Real>(m: &mut Matrix<T>, range: f64, rng: &mut crate::Rng) {
    for x in m.as_mut_slice() {
        *x = if range > 0.0 {
            T::of(rng.gen_range(-range..=range))
        } else {
            T::zero()
        };
    }
}
