//! Taped forward pass over a padded minibatch, used for training.

use alloc::vec;
use alloc::vec::Vec;

use super::{BlockName, FreezeMask, ParameterBlocks, Seq2Seq};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{dropout_mask, GradientTape, Matrix, NodeId};
use crate::vocab::{BOS, EOS, PAD};

/// Sentence pairs laid out time-major with `<pad>` filling.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    /// Corpus indices of the member pairs.
    pub indices: Vec<usize>,
    /// `source[t][b]`: token read by the encoder at time `t`. Sources are
    /// reversed and left-padded so every row finishes at the last step.
    pub source: Vec<Vec<usize>>,
    pub source_lengths: Vec<usize>,
    /// `target_in[u][b]`: decoder input at step `u` (`<s>` first).
    pub target_in: Vec<Vec<usize>>,
    /// `target_out[u][b]`: token to predict, `<pad>` past the end.
    pub target_out: Vec<Vec<usize>>,
}

impl Minibatch {
    /// Lays out `pairs[i] = (source ids, target ids)`; corpus positions go in `indices`.
    pub fn new(pairs: &[(&[usize], &[usize])], indices: Vec<usize>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("minibatch"));
        }
        let batch = pairs.len();
        let src_max = pairs.iter().map(|p| p.0.len()).max().unwrap_or(0);
        let tgt_max = pairs.iter().map(|p| p.1.len()).max().unwrap_or(0) + 1;
        let mut source = vec![vec![PAD; batch]; src_max];
        let mut target_in = vec![vec![PAD; batch]; tgt_max];
        let mut target_out = vec![vec![PAD; batch]; tgt_max];
        for (b, (src, tgt)) in pairs.iter().enumerate() {
            if src.is_empty() || tgt.is_empty() {
                return Err(Error::Empty("sentence in minibatch"));
            }
            for (t, row) in source.iter_mut().enumerate() {
                let pos = src_max - 1 - t;
                if pos < src.len() {
                    row[b] = src[pos];
                }
            }
            target_in[0][b] = BOS;
            for (u, &y) in tgt.iter().enumerate() {
                target_in[u + 1][b] = y;
                target_out[u][b] = y;
            }
            target_out[tgt.len()][b] = EOS;
        }
        Ok(Minibatch {
            indices,
            source,
            source_lengths: pairs.iter().map(|p| p.0.len()).collect(),
            target_in,
            target_out,
        })
    }

    pub fn len(&self) -> usize {
        self.source_lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_lengths.is_empty()
    }

    /// Predicted tokens, `</s>` included.
    pub fn target_tokens(&self) -> usize {
        self.target_out.iter().flatten().filter(|&&y| y != PAD).count()
    }
}

/// Tape leaves for every tensor of a [`ParameterBlocks`], in
/// [`ParameterBlocks::tensors`] order.
#[derive(Debug, Clone)]
pub struct ParamLeaves {
    pub nodes: Vec<NodeId>,
}

impl ParamLeaves {
    /// Registers all parameters; blocks frozen in `mask` become constants.
    pub fn register<T: Real>(tape: &mut GradientTape<T>, params: &ParameterBlocks<T>, mask: &FreezeMask) -> Self {
        let blocks = ParameterBlocks::<T>::tensor_blocks();
        let nodes = params
            .tensors()
            .into_iter()
            .zip(blocks)
            .map(|(m, b)| tape.leaf(m.clone(), !mask.is_frozen(b)))
            .collect();
        ParamLeaves { nodes }
    }

    /// Adds the gradients gathered on the tape into `grads`.
    pub fn accumulate<T: Real>(&self, g: &crate::tensor::Gradients<T>, grads: &mut ParameterBlocks<T>) {
        for (node, dst) in self.nodes.iter().zip(grads.tensors_mut()) {
            if let Some(src) = g.get(*node) {
                dst.add_assign(src);
            }
        }
    }

    fn get(&self, block: BlockName, k: usize) -> NodeId {
        let offset: usize = match block {
            BlockName::SourceEmbeddings => 0,
            BlockName::SourceRnn => 1,
            BlockName::TargetRnn => 5,
            BlockName::TargetAttention => 9,
            BlockName::TargetInputEmbeddings => 12,
            BlockName::TargetOutputEmbeddings => 13,
        };
        self.nodes[offset + k]
    }
}

/// Dropout configuration for a training-mode forward pass.
pub struct Dropout<'r> {
    pub p: f64,
    pub rng: &'r mut crate::Rng,
}

impl Dropout<'_> {
    fn apply<T: Real>(&mut self, tape: &mut GradientTape<T>, x: NodeId) -> Result<NodeId> {
        if self.p == 0.0 {
            return Ok(x);
        }
        let n = tape.value(x).len();
        let mask = dropout_mask(n, self.p, self.rng)?;
        Ok(tape.scale(x, mask))
    }
}

/// Records the summed negative log-likelihood of `batch` on `tape`.
///
/// Pass `dropout = None` for an eval-mode pass.
pub fn minibatch_loss<T: Real>(
    tape: &mut GradientTape<T>,
    model: &Seq2Seq<T>,
    leaves: &ParamLeaves,
    batch: &Minibatch,
    mut dropout: Option<Dropout<'_>>,
) -> Result<NodeId> {
    let d = model.hidden();
    let rows = batch.len();
    for &id in batch.source.iter().flatten() {
        model.src_vocab.check_id(id)?;
    }
    for &id in batch.target_in.iter().chain(&batch.target_out).flatten() {
        model.tgt_vocab.check_id(id)?;
    }

    let src_emb = leaves.get(BlockName::SourceEmbeddings, 0);
    let enc_w = [leaves.get(BlockName::SourceRnn, 0), leaves.get(BlockName::SourceRnn, 2)];
    let enc_b = [leaves.get(BlockName::SourceRnn, 1), leaves.get(BlockName::SourceRnn, 3)];
    let dec_w = [leaves.get(BlockName::TargetRnn, 0), leaves.get(BlockName::TargetRnn, 2)];
    let dec_b = [leaves.get(BlockName::TargetRnn, 1), leaves.get(BlockName::TargetRnn, 3)];
    let pos_w = leaves.get(BlockName::TargetAttention, 0);
    let pos_v = leaves.get(BlockName::TargetAttention, 1);
    let combiner = leaves.get(BlockName::TargetAttention, 2);
    let tgt_emb = leaves.get(BlockName::TargetInputEmbeddings, 0);
    let out_w = leaves.get(BlockName::TargetOutputEmbeddings, 0);
    let out_b = leaves.get(BlockName::TargetOutputEmbeddings, 1);

    let zeros = tape.constant(Matrix::zeros(rows, d));
    let mut h = [zeros, zeros];
    let mut c = [zeros, zeros];

    // encoder: time t reads source position src_len_max - 1 - t
    let steps = batch.source.len();
    let mut states = vec![zeros; steps];
    for (t, ids) in batch.source.iter().enumerate() {
        let live: Vec<bool> = ids.iter().map(|&id| id != PAD).collect();
        let all_live = live.iter().all(|&l| l);
        let x = tape.gather(src_emb, ids.clone());
        let mut input = x;
        for layer in 0..2 {
            let (hn, cn) = tape.lstm(input, h[layer], c[layer], enc_w[layer], enc_b[layer]);
            let (hn, cn) = if all_live {
                (hn, cn)
            } else {
                (tape.select(hn, h[layer], live.clone()), tape.select(cn, c[layer], live.clone()))
            };
            h[layer] = hn;
            c[layer] = cn;
            input = match (&mut dropout, layer) {
                (Some(drop), 0) => drop.apply(tape, hn)?,
                _ => hn,
            };
        }
        states[steps - 1 - t] = h[1];
    }

    let mut feed = zeros;
    let mut losses = Vec::with_capacity(batch.target_in.len());
    for (u, ids) in batch.target_in.iter().enumerate() {
        let e = tape.gather(tgt_emb, ids.clone());
        let mut input = tape.concat(e, feed);
        for layer in 0..2 {
            let (hn, cn) = tape.lstm(input, h[layer], c[layer], dec_w[layer], dec_b[layer]);
            h[layer] = hn;
            c[layer] = cn;
            input = match (&mut dropout, layer) {
                (Some(drop), 0) => drop.apply(tape, hn)?,
                _ => hn,
            };
        }
        let ctx = tape.attention(
            h[1],
            &states,
            &batch.source_lengths,
            pos_w,
            pos_v,
            model.config.attention,
            model.config.attention_window,
        );
        let joined = tape.concat(ctx, h[1]);
        let mixed = tape.matmul(joined, combiner);
        let attentional = tape.tanh(mixed);
        feed = attentional;
        let pre_softmax = match &mut dropout {
            Some(drop) => drop.apply(tape, attentional)?,
            None => attentional,
        };
        let logits = tape.matmul(pre_softmax, out_w);
        let logits = tape.add_bias(logits, out_b);
        let targets = batch.target_out[u]
            .iter()
            .map(|&y| (y != PAD).then_some(y))
            .collect();
        losses.push(tape.softmax_xent(logits, targets));
    }
    Ok(tape.sum(losses))
}
