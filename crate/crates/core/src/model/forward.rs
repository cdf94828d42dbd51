//! Eval-mode forward pass: no dropout, no tape, no randomness.

use alloc::vec::Vec;

use super::Seq2Seq;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::attention::{attend_row, context, RowAttention};
use crate::tensor::{log_softmax, lstm_cell, Matrix};
use crate::vocab::{BOS, EOS};

/// Encoder result for one source sentence.
#[derive(Debug, Clone)]
pub struct EncoderOutput<T> {
    /// Top-layer state of each source position, in original word order.
    pub states: Vec<Matrix<T>>,
    /// Final `(h, c)` of each layer after reading the reversed sentence.
    pub final_h: [Matrix<T>; 2],
    pub final_c: [Matrix<T>; 2],
}

impl<T: Real> EncoderOutput<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Recurrent decoder state between steps.
#[derive(Debug, Clone)]
pub struct DecoderState<T> {
    pub h: [Matrix<T>; 2],
    pub c: [Matrix<T>; 2],
    /// Attentional vector of the previous step, fed into the next input.
    pub feed: Matrix<T>,
}

impl<T: Real> Default for DecoderState<T> {
    /// An uninitialised state; stepping from it is an error.
    fn default() -> Self {
        DecoderState {
            h: [Matrix::default(), Matrix::default()],
            c: [Matrix::default(), Matrix::default()],
            feed: Matrix::default(),
        }
    }
}

/// Everything one decoder step produces.
#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    pub logits: Vec<T>,
    pub attention: RowAttention<T>,
}

impl<T: Real> Seq2Seq<T> {
    fn check_ids(&self, ids: &[usize], src: bool) -> Result<()> {
        let v = if src { &self.src_vocab } else { &self.tgt_vocab };
        for &id in ids {
            v.check_id(id)?;
        }
        Ok(())
    }

    /// Runs the encoder over the reversed source sentence.
    pub fn encode(&self, source: &[usize]) -> Result<EncoderOutput<T>> {
        if source.is_empty() {
            return Err(Error::Empty("source sentence"));
        }
        self.check_ids(source, true)?;
        let d = self.hidden();
        let p = &self.params;
        let mut h = [Matrix::zeros(1, d), Matrix::zeros(1, d)];
        let mut c = [Matrix::zeros(1, d), Matrix::zeros(1, d)];
        let mut states = alloc::vec![Matrix::zeros(1, d); source.len()];
        for (j, &id) in source.iter().enumerate().rev() {
            let x = Matrix::row_vector(p.source_embeddings.row(id).to_vec());
            let (h0, c0) = lstm_cell(&x, &h[0], &c[0], &p.source_rnn[0])?;
            let (h1, c1) = lstm_cell(&h0, &h[1], &c[1], &p.source_rnn[1])?;
            states[j] = h1.clone();
            h = [h0, h1];
            c = [c0, c1];
        }
        Ok(EncoderOutput {
            states,
            final_h: h,
            final_c: c,
        })
    }

    /// Decoder state handed over from the encoder; the first feed-input is zero.
    pub fn initial_state(&self, enc: &EncoderOutput<T>) -> DecoderState<T> {
        DecoderState {
            h: enc.final_h.clone(),
            c: enc.final_c.clone(),
            feed: Matrix::zeros(1, self.hidden()),
        }
    }

    /// One decoder step from `prev` (the previously emitted target id).
    pub fn decode_step(
        &self,
        prev: usize,
        state: &DecoderState<T>,
        enc: &EncoderOutput<T>,
    ) -> Result<(StepOutput<T>, DecoderState<T>)> {
        let d = self.hidden();
        if state.feed.shape() != (1, d) || state.h[0].shape() != (1, d) {
            return Err(Error::UninitializedState);
        }
        if enc.is_empty() {
            return Err(Error::Empty("encoder states"));
        }
        self.check_ids(&[prev], false)?;
        let p = &self.params;

        let emb = Matrix::row_vector(p.target_input_embeddings.row(prev).to_vec());
        let x = Matrix::concat_cols(&emb, &state.feed);
        let (h0, c0) = lstm_cell(&x, &state.h[0], &state.c[0], &p.target_rnn[0])?;
        let (h1, c1) = lstm_cell(&h0, &state.h[1], &state.c[1], &p.target_rnn[1])?;

        let att = &p.target_attention;
        let attention = attend_row(
            h1.row(0),
            |j| enc.states[j].row(0),
            enc.len(),
            &att.position_w,
            &att.position_v,
            self.config.attention,
            self.config.attention_window,
        );
        let mut ctx = Matrix::zeros(1, d);
        context(&attention, |j| enc.states[j].row(0), ctx.row_mut(0));
        let combined = Matrix::concat_cols(&ctx, &h1);
        let attentional = Matrix::matmul(&combined, &att.combiner).map(|x| x.tanh());

        let out = &p.target_output_embeddings;
        let mut logits = Matrix::matmul(&attentional, &out.w);
        for (x, &b) in logits.as_mut_slice().iter_mut().zip(out.b.as_slice()) {
            *x += b;
        }

        let next = DecoderState {
            h: [h0, h1],
            c: [c0, c1],
            feed: attentional,
        };
        Ok((
            StepOutput {
                logits: logits.into_vec(),
                attention,
            },
            next,
        ))
    }

    /// Per-step log-probabilities of `target` followed by `</s>`.
    pub fn target_logprobs(&self, source: &[usize], target: &[usize]) -> Result<Vec<T>> {
        if target.is_empty() {
            return Err(Error::Empty("target sentence"));
        }
        self.check_ids(target, false)?;
        let enc = self.encode(source)?;
        let mut state = self.initial_state(&enc);
        let mut prev = BOS;
        let mut out = Vec::with_capacity(target.len() + 1);
        for &y in target.iter().chain(core::iter::once(&EOS)) {
            let (step, next) = self.decode_step(prev, &state, &enc)?;
            out.push(log_softmax(&step.logits)?[y]);
            state = next;
            prev = y;
        }
        Ok(out)
    }

    /// `Σ_t log P(y_t | y_<t, x)` over the target words and the final `</s>`.
    pub fn sentence_logprob(&self, source: &[usize], target: &[usize]) -> Result<T> {
        Ok(self.target_logprobs(source, target)?.into_iter().sum())
    }
}
