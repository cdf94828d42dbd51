//! Beam search, ensembles and attention-based unknown-word replacement.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::model::{DecoderState, EncoderOutput, Seq2Seq};
use crate::real::Real;
use crate::tensor::log_softmax;
use crate::transfer::TTable;
use crate::vocab::{Vocabulary, BOS, EOS, PAD, UNK};

/// Output of one decoder step.
#[derive(Debug, Clone)]
pub struct Step<S> {
    /// `log P(w | prefix, source)` for every target id.
    pub logprobs: Vec<f64>,
    /// Attention weight on each source position.
    pub attention: Vec<f64>,
    pub state: S,
}

/// Anything that can be decoded one target token at a time.
pub trait StepModel {
    /// Per-sentence data computed once from the source.
    type Context;
    type State: Clone;

    fn target_vocab(&self) -> &Vocabulary;

    fn start(&self, source: &[usize]) -> Result<(Self::Context, Self::State)>;

    fn step(&self, ctx: &Self::Context, prev: usize, state: &Self::State) -> Result<Step<Self::State>>;
}

impl<T: Real> StepModel for Seq2Seq<T> {
    type Context = EncoderOutput<T>;
    type State = DecoderState<T>;

    fn target_vocab(&self) -> &Vocabulary {
        &self.tgt_vocab
    }

    fn start(&self, source: &[usize]) -> Result<(EncoderOutput<T>, DecoderState<T>)> {
        let enc = self.encode(source)?;
        let state = self.initial_state(&enc);
        Ok((enc, state))
    }

    fn step(&self, enc: &EncoderOutput<T>, prev: usize, state: &DecoderState<T>) -> Result<Step<DecoderState<T>>> {
        let (out, next) = self.decode_step(prev, state, enc)?;
        Ok(Step {
            logprobs: log_softmax(&out.logits)?.into_iter().map(Real::as_f64).collect(),
            attention: out.attention.dense_weights().into_iter().map(Real::as_f64).collect(),
            state: next,
        })
    }
}

/// Several models decoded in lockstep; each step's distribution is the
/// mean of the members' distributions.
#[derive(Debug, Clone)]
pub struct Ensemble<'a, T> {
    members: Vec<&'a Seq2Seq<T>>,
    log_space: bool,
}

impl<'a, T: Real> Ensemble<'a, T> {
    /// Probability-space averaging. Members must share the target vocabulary.
    pub fn new(members: Vec<&'a Seq2Seq<T>>) -> Result<Self> {
        let first = members.first().ok_or(Error::Empty("ensemble"))?;
        for (i, m) in members.iter().enumerate().skip(1) {
            if m.tgt_vocab != first.tgt_vocab {
                return Err(Error::VocabularyMismatch(alloc::format!(
                    "ensemble member {i} has a different target vocabulary"
                )));
            }
        }
        Ok(Ensemble {
            members,
            log_space: false,
        })
    }

    /// Averages log-probabilities instead (a renormalised geometric mean).
    pub fn log_space(mut self, on: bool) -> Self {
        self.log_space = on;
        self
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The first member; its vocabularies are shared by all members.
    pub fn first(&self) -> &'a Seq2Seq<T> {
        self.members[0]
    }

    /// `Σ_t log P_ens(y_t | y_<t, x)` over `target` and the final `</s>`.
    pub fn sequence_logprob(&self, source: &[usize], target: &[usize]) -> Result<f64> {
        let (ctx, mut state) = self.start(source)?;
        let mut prev = BOS;
        let mut total = 0.0;
        for &y in target.iter().chain(core::iter::once(&EOS)) {
            let step = self.step(&ctx, prev, &state)?;
            total += step.logprobs[y];
            state = step.state;
            prev = y;
        }
        Ok(total)
    }
}

impl<T: Real> StepModel for Ensemble<'_, T> {
    type Context = Vec<EncoderOutput<T>>;
    type State = Vec<DecoderState<T>>;

    fn target_vocab(&self) -> &Vocabulary {
        &self.members[0].tgt_vocab
    }

    fn start(&self, source: &[usize]) -> Result<(Self::Context, Self::State)> {
        let mut ctx = Vec::with_capacity(self.members.len());
        let mut states = Vec::with_capacity(self.members.len());
        for m in &self.members {
            let (c, s) = m.start(source)?;
            ctx.push(c);
            states.push(s);
        }
        Ok((ctx, states))
    }

    fn step(&self, ctx: &Self::Context, prev: usize, state: &Self::State) -> Result<Step<Self::State>> {
        let mut steps = Vec::with_capacity(self.members.len());
        for ((m, c), s) in self.members.iter().zip(ctx).zip(state) {
            steps.push(m.step(c, prev, s)?);
        }
        if steps.len() == 1 {
            let only = steps.pop().expect("one member");
            return Ok(Step {
                logprobs: only.logprobs,
                attention: only.attention,
                state: vec![only.state],
            });
        }
        let k = steps.len() as f64;
        let v = steps[0].logprobs.len();
        let logprobs = if self.log_space {
            let mut mean = vec![0.0; v];
            for s in &steps {
                for (m, &lp) in mean.iter_mut().zip(&s.logprobs) {
                    *m += lp / k;
                }
            }
            let lse = log_sum_exp(&mean);
            mean.into_iter().map(|x| x - lse).collect()
        } else {
            let mut mean = vec![0.0; v];
            for s in &steps {
                for (m, &lp) in mean.iter_mut().zip(&s.logprobs) {
                    *m += Float::exp(lp);
                }
            }
            mean.into_iter().map(|p| Float::ln(p / k)).collect()
        };
        let mut attention = vec![0.0; steps[0].attention.len()];
        for s in &steps {
            for (a, &w) in attention.iter_mut().zip(&s.attention) {
                *a += w / k;
            }
        }
        Ok(Step {
            logprobs,
            attention,
            state: steps.into_iter().map(|s| s.state).collect(),
        })
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + Float::ln(xs.iter().map(|&x| Float::exp(x - max)).sum::<f64>())
}

/// A (possibly unfinished) translation.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Emitted target ids, `</s>` excluded.
    pub tokens: Vec<usize>,
    /// Log-probability of `tokens` (and of `</s>` when finished).
    pub logprob: f64,
    /// Most-attended source position for each emitted token.
    pub attention: Vec<usize>,
    /// Whether the hypothesis ended with `</s>` (rather than hitting `max_len`).
    pub finished: bool,
}

impl Hypothesis {
    /// Number of scored predictions, `</s>` included.
    pub fn length(&self) -> usize {
        self.tokens.len() + usize::from(self.finished)
    }

    /// Length-normalised log-probability.
    pub fn score(&self) -> f64 {
        self.logprob / self.length().max(1) as f64
    }
}

fn by_score(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score()
        .partial_cmp(&a.score())
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Beam search over `model`.
///
/// At every step all one-token extensions of the live hypotheses are
/// ranked by log-probability and the best `beam` survive; survivors ending
/// in `</s>` leave the beam. After `max_len` predictions the remaining
/// hypotheses are returned unfinished. `<pad>` and `<s>` are never emitted.
/// The result is ranked by length-normalised log-probability.
pub fn beam_search<M: StepModel>(model: &M, source: &[usize], beam: usize, max_len: usize) -> Result<Vec<Hypothesis>> {
    if source.is_empty() {
        return Err(Error::Empty("source sentence"));
    }
    if beam == 0 {
        return Err(Error::InvalidConfig("beam must be at least 1".into()));
    }
    if max_len == 0 {
        return Err(Error::InvalidConfig("max_len must be at least 1".into()));
    }
    let (ctx, state) = model.start(source)?;
    let empty = Hypothesis {
        tokens: Vec::new(),
        logprob: 0.0,
        attention: Vec::new(),
        finished: false,
    };
    let mut live: Vec<(Hypothesis, usize, M::State)> = vec![(empty, BOS, state)];
    let mut done: Vec<Hypothesis> = Vec::new();

    for t in 0..max_len {
        let mut expanded = Vec::with_capacity(live.len());
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (i, (hyp, prev, st)) in live.iter().enumerate() {
            let step = model.step(&ctx, *prev, st)?;
            for (w, &lp) in step.logprobs.iter().enumerate() {
                if w == PAD || w == BOS {
                    continue;
                }
                candidates.push((hyp.logprob + lp, i, w));
            }
            expanded.push(step);
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        candidates.truncate(beam);

        let mut next = Vec::with_capacity(candidates.len());
        for (logprob, i, w) in candidates {
            let parent = &live[i].0;
            if w == EOS {
                done.push(Hypothesis {
                    logprob,
                    finished: true,
                    ..parent.clone()
                });
                continue;
            }
            let mut hyp = parent.clone();
            hyp.tokens.push(w);
            hyp.attention.push(argmax(&expanded[i].attention));
            hyp.logprob = logprob;
            if t + 1 == max_len {
                done.push(hyp);
            } else {
                next.push((hyp, w, expanded[i].state.clone()));
            }
        }
        live = next;
        if live.is_empty() {
            break;
        }
    }
    done.sort_by(by_score);
    Ok(done)
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Replaces each `<unk>` in `hyp` with the translation of the source token
/// it attended to most, or with that token itself when `dict` has no entry.
/// `</s>` is not part of the output.
pub fn unk_replace<S: AsRef<str>>(
    hyp: &Hypothesis,
    vocab: &Vocabulary,
    source: &[S],
    dict: Option<&TTable>,
) -> Vec<String> {
    hyp.tokens
        .iter()
        .enumerate()
        .map(|(t, &id)| {
            if id != UNK {
                return vocab.token(id).unwrap_or("<unk>").to_string();
            }
            let Some(src) = hyp.attention.get(t).and_then(|&p| source.get(p)) else {
                return vocab.token(UNK).unwrap_or("<unk>").to_string();
            };
            let src = src.as_ref();
            match dict.and_then(|d| d.best(src)) {
                Some((translation, _)) => translation.to_string(),
                None => src.to_string(),
            }
        })
        .collect()
}
