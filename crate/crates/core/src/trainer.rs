//! Minibatch SGD with plateau learning-rate decay.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::model::{minibatch_loss, Dropout, FreezeMask, Minibatch, ParamLeaves, ParameterBlocks, Seq2Seq};
use crate::real::Real;
use crate::tensor::{clip_gradients, sgd_step, GradientTape};
use crate::transfer::l2_toward_parent;

/// One sentence pair as vocabulary ids (no `<s>`/`</s>`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl Pair {
    pub fn new(source: Vec<usize>, target: Vec<usize>) -> Self {
        Pair { source, target }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub minibatch_size: usize,
    pub lr: f64,
    pub decay: f64,
    pub clip_threshold: f64,
    pub epochs: usize,
    pub dropout_p: f64,
    pub seed: u64,
    /// Strength of the pull toward the parent weights (0 disables it).
    pub l2_lambda: f64,
    /// Report train perplexity from an eval-mode pass after each epoch
    /// (`true`) or from the running dropout-mode loss (`false`).
    pub eval_train_ppl: bool,
}

impl TrainConfig {
    /// Paper settings for a child model.
    pub fn paper() -> Self {
        TrainConfig {
            minibatch_size: 128,
            lr: 0.5,
            decay: 0.9,
            clip_threshold: 5.0,
            epochs: 100,
            dropout_p: 0.5,
            seed: 0,
            l2_lambda: 0.0,
            eval_train_ppl: true,
        }
    }

    /// Paper settings for a parent model (lighter dropout).
    pub fn paper_parent() -> Self {
        TrainConfig {
            dropout_p: 0.2,
            ..Self::paper()
        }
    }

    pub fn desk() -> Self {
        TrainConfig {
            minibatch_size: 16,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.minibatch_size == 0 {
            return Err(Error::InvalidConfig("minibatch_size must be at least 1".into()));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::InvalidConfig("decay must lie strictly between 0 and 1".into()));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::InvalidConfig("lr must be nonnegative".into()));
        }
        if !(self.clip_threshold > 0.0) {
            return Err(Error::InvalidConfig("clip_threshold must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidProbability {
                what: "dropout_p",
                value: self.dropout_p,
            });
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(Error::InvalidConfig("l2 lambda must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_ppl: f64,
    pub dev_ppl: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve {
    pub records: Vec<EpochRecord>,
}

impl LearningCurve {
    /// First epoch whose dev perplexity is at or below `threshold`.
    pub fn first_epoch_below(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.dev_ppl <= threshold).map(|r| r.epoch)
    }

    pub fn best_dev(&self) -> Option<f64> {
        self.records.iter().map(|r| r.dev_ppl).fold(None, |acc, x| match acc {
            None => Some(x),
            Some(a) => Some(if x < a { x } else { a }),
        })
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Optional extras for [`train_with`].
#[derive(Default)]
pub struct TrainHooks<'a, T> {
    /// Parent weights for L2 regularisation (used when `l2_lambda > 0`).
    pub anchor: Option<&'a ParameterBlocks<T>>,
    /// Monotonic clock in seconds, for the wall-time column.
    pub clock: Option<&'a dyn Fn() -> f64>,
    /// Called after every epoch.
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochRecord)>,
}

/// Total target tokens (`</s>` included) and summed log-probability.
pub fn corpus_logprob<T: Real>(model: &Seq2Seq<T>, corpus: &[Pair]) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut tokens = 0;
    for p in corpus {
        total += model.sentence_logprob(&p.source, &p.target)?.as_f64();
        tokens += p.target.len() + 1;
    }
    Ok((total, tokens))
}

/// `exp(-Σ log P / Σ |target|+1)`.
pub fn perplexity<T: Real>(model: &Seq2Seq<T>, corpus: &[Pair]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let (lp, n) = corpus_logprob(model, corpus)?;
    Ok(num_traits::Float::exp(-lp / n as f64))
}

/// Splits `corpus` into minibatches of at most `size` pairs.
///
/// Pairs are grouped by source length (shuffled within equal lengths) so
/// that little padding is needed, and the batch order is shuffled. The
/// result depends only on `corpus`, `size` and `seed`.
pub fn make_minibatches(corpus: &[Pair], size: usize, seed: u64) -> Result<Vec<Minibatch>> {
    if size == 0 {
        return Err(Error::InvalidConfig("minibatch size must be at least 1".into()));
    }
    let mut rng = crate::seeded_rng(seed);
    let mut order: Vec<(usize, u64, usize)> = corpus
        .iter()
        .enumerate()
        .map(|(i, p)| (p.source.len(), rng.gen::<u64>(), i))
        .collect();
    order.sort_unstable();
    let mut batches = Vec::with_capacity(corpus.len().div_ceil(size));
    for chunk in order.chunks(size) {
        let idx: Vec<usize> = chunk.iter().map(|&(_, _, i)| i).collect();
        let pairs: Vec<(&[usize], &[usize])> = idx
            .iter()
            .map(|&i| (&corpus[i].source[..], &corpus[i].target[..]))
            .collect();
        batches.push(Minibatch::new(&pairs, idx)?);
    }
    batches.shuffle(&mut rng);
    Ok(batches)
}

/// Gradient of the summed loss of one minibatch (sentences are not
/// averaged; clipping bounds the step). Returns `(summed loss, gradients)`.
pub fn minibatch_gradients<T: Real>(
    model: &Seq2Seq<T>,
    batch: &Minibatch,
    mask: &FreezeMask,
    dropout: Option<Dropout<'_>>,
) -> Result<(T, ParameterBlocks<T>)> {
    let mut tape = GradientTape::new();
    let leaves = ParamLeaves::register(&mut tape, &model.params, mask);
    let loss = minibatch_loss(&mut tape, model, &leaves, batch, dropout)?;
    let seed = T::one();
    let g = tape.backward(loss, seed);
    let mut grads = model.params.zeros_like();
    leaves.accumulate(&g, &mut grads);
    Ok((tape.value(loss).get(0, 0), grads))
}

/// Trains `model`, returning the snapshot with the best dev perplexity.
pub fn train<T: Real>(
    model: Seq2Seq<T>,
    train: &[Pair],
    dev: &[Pair],
    config: &TrainConfig,
    mask: &FreezeMask,
) -> Result<(Seq2Seq<T>, LearningCurve)> {
    train_with(model, train, dev, config, mask, TrainHooks::default())
}

pub fn train_with<T: Real>(
    mut model: Seq2Seq<T>,
    train: &[Pair],
    dev: &[Pair],
    config: &TrainConfig,
    mask: &FreezeMask,
    mut hooks: TrainHooks<'_, T>,
) -> Result<(Seq2Seq<T>, LearningCurve)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if dev.is_empty() {
        return Err(Error::Empty("dev corpus"));
    }
    if config.l2_lambda > 0.0 && hooks.anchor.is_none() {
        return Err(Error::InvalidConfig("l2 regularisation needs parent weights".into()));
    }
    let now = || hooks.clock.map(|c| c()).unwrap_or(0.0);

    let mut rng = crate::seeded_rng(config.seed);
    let mut lr = config.lr;
    let mut best_dev = f64::INFINITY;
    let mut best = model.clone();
    let mut curve = LearningCurve::default();

    for epoch in 1..=config.epochs {
        let started = now();
        let batches = make_minibatches(train, config.minibatch_size, rng.gen())?;
        let mut running = 0.0;
        let mut running_tokens = 0;
        for (b, batch) in batches.iter().enumerate() {
            let dropout = (config.dropout_p > 0.0).then_some(Dropout {
                p: config.dropout_p,
                rng: &mut rng,
            });
            let (loss, mut grads) = minibatch_gradients(&model, batch, mask, dropout)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, minibatch: b });
            }
            running += loss.as_f64();
            running_tokens += batch.target_tokens();
            if let (Some(anchor), true) = (hooks.anchor, config.l2_lambda > 0.0) {
                l2_toward_parent(&mut grads, &model.params, anchor, T::of(config.l2_lambda), mask)?;
            }
            clip_gradients(&mut grads.tensors_mut(), T::of(config.clip_threshold))?;
            sgd_step(&mut model.params, &grads, T::of(lr), mask)?;
        }

        let train_ppl = if config.eval_train_ppl {
            perplexity(&model, train)?
        } else {
            num_traits::Float::exp(running / running_tokens as f64)
        };
        let dev_ppl = perplexity(&model, dev)?;
        if !dev_ppl.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                minibatch: batches.len(),
            });
        }
        let record = EpochRecord {
            epoch,
            train_ppl,
            dev_ppl,
            lr,
            seconds: now() - started,
        };
        log::debug!(
            "epoch {epoch}: train ppl {train_ppl:.3} dev ppl {dev_ppl:.3} lr {lr:.4}"
        );
        if let Some(cb) = hooks.on_epoch.as_mut() {
            cb(&record);
        }
        curve.records.push(record);

        // plateau: anything short of a 1e-6 improvement decays the rate
        if dev_ppl < best_dev - 1e-6 {
            best_dev = dev_ppl;
            best = model.clone();
        } else {
            lr *= config.decay;
        }
    }
    if config.epochs == 0 {
        best = model;
    }
    Ok((best, curve))
}
