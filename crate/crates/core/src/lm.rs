//! Two-layer LSTM language model over target text.
//!
//! The language model is the translation model's decoder run without a
//! source: its "source" is a single `<unk>` read by an all-zero encoder, so
//! the encoder's states, the attention context and the decoder's initial
//! state are all exactly zero. What remains is
//!
//! ```text
//! x_t   = [E(w_{t-1}) | h̃_{t-1}]
//! h_t   = LSTM₂(LSTM₁(x_t))
//! h̃_t   = tanh(h_t · W_h)          (W_h = lower half of the combiner)
//! P(w_t | w_<t) = softmax(h̃_t · W_out + b_out)
//! ```
//!
//! Sharing the decoder's layout means the language model trains with the
//! same tape code and can seed a translation model's target side directly.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{BlockName, FreezeMask, ModelConfig, ParameterBlocks, Seq2Seq};
use crate::real::Real;
use crate::tensor::log_softmax;
use crate::trainer::{self, LearningCurve, Pair, TrainConfig};
use crate::vocab::{Vocabulary, UNK};

/// Architecture settings of a language model.
#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    pub hidden_size: usize,
    pub init_range: f64,
}

impl LmConfig {
    pub fn paper() -> Self {
        LmConfig {
            hidden_size: 1000,
            init_range: 0.08,
        }
    }

    pub fn desk() -> Self {
        LmConfig {
            hidden_size: 64,
            ..Self::paper()
        }
    }
}

/// Blocks that never train in a language model.
pub fn lm_mask() -> FreezeMask {
    FreezeMask::of(&[BlockName::SourceEmbeddings, BlockName::SourceRnn])
}

/// Training recipe for language models: the trainer's, with dropout 0.2.
pub fn lm_train_config() -> TrainConfig {
    TrainConfig::paper_parent()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel<T> {
    model: Seq2Seq<T>,
}

impl<T: Real> LanguageModel<T> {
    pub fn new(vocab: Vocabulary, config: &LmConfig, rng: &mut crate::Rng) -> Result<Self> {
        let mc = ModelConfig {
            hidden_size: config.hidden_size,
            init_range: config.init_range,
            attention_window: 1,
            ..ModelConfig::desk(4, vocab.len())
        };
        let mut model = Seq2Seq::new(mc, Vocabulary::default(), vocab, rng)?;
        for m in model.params.block_mut(BlockName::SourceEmbeddings) {
            m.fill(T::zero());
        }
        for m in model.params.block_mut(BlockName::SourceRnn) {
            m.fill(T::zero());
        }
        Ok(LanguageModel { model })
    }

    /// Wraps a model whose source side is empty and all-zero.
    pub fn from_seq2seq(model: Seq2Seq<T>) -> Result<Self> {
        if !model.src_vocab.types().is_empty() {
            return Err(Error::VocabularyMismatch(
                "a language model has no source vocabulary".into(),
            ));
        }
        let zero = |b| {
            model
                .params
                .block(b)
                .iter()
                .all(|(_, m)| m.as_slice().iter().all(|x| *x == T::zero()))
        };
        if !zero(BlockName::SourceEmbeddings) || !zero(BlockName::SourceRnn) {
            return Err(Error::InvalidConfig(
                "a language model's source blocks must be zero".into(),
            ));
        }
        Ok(LanguageModel { model })
    }

    pub fn hidden(&self) -> usize {
        self.model.hidden()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.model.tgt_vocab
    }

    pub fn params(&self) -> &ParameterBlocks<T> {
        &self.model.params
    }

    /// The underlying decoder-only translation model.
    pub fn as_seq2seq(&self) -> &Seq2Seq<T> {
        &self.model
    }

    pub fn into_seq2seq(self) -> Seq2Seq<T> {
        self.model
    }

    /// `log P(w_t | w_<t)` for every token followed by `</s>`.
    pub fn token_logprobs(&self, tokens: &[usize]) -> Result<Vec<T>> {
        self.model.target_logprobs(&[UNK], tokens)
    }

    /// Log-distribution over the next token after `prefix` (`<s>` implied).
    pub fn next_logprobs(&self, prefix: &[usize]) -> Result<Vec<T>> {
        let enc = self.model.encode(&[UNK])?;
        let mut state = self.model.initial_state(&enc);
        let mut prev = crate::vocab::BOS;
        for &w in prefix {
            let (_, next) = self.model.decode_step(prev, &state, &enc)?;
            state = next;
            prev = w;
        }
        let (out, _) = self.model.decode_step(prev, &state, &enc)?;
        log_softmax(&out.logits)
    }

    pub fn cast<U: Real>(&self) -> LanguageModel<U> {
        LanguageModel {
            model: self.model.cast(),
        }
    }
}

fn as_pairs(corpus: &[Vec<usize>]) -> Vec<Pair> {
    corpus.iter().map(|s| Pair::new(vec![UNK], s.clone())).collect()
}

/// `Σ log P(w_t | w_<t)` over the tokens (no end-of-sentence term).
pub fn lm_score<T: Real>(lm: &LanguageModel<T>, tokens: &[usize]) -> Result<T> {
    if tokens.is_empty() {
        return Err(Error::Empty("token sequence"));
    }
    let lp = lm.token_logprobs(tokens)?;
    Ok(lp[..tokens.len()].iter().copied().sum())
}

/// Like [`lm_score`] but including the final `</s>` prediction.
pub fn lm_sentence_logprob<T: Real>(lm: &LanguageModel<T>, tokens: &[usize]) -> Result<T> {
    if tokens.is_empty() {
        return Err(Error::Empty("token sequence"));
    }
    Ok(lm.token_logprobs(tokens)?.into_iter().sum())
}

/// Perplexity with `</s>` counted as a token.
pub fn lm_perplexity<T: Real>(lm: &LanguageModel<T>, corpus: &[Vec<usize>]) -> Result<f64> {
    trainer::perplexity(&lm.model, &as_pairs(corpus))
}

/// Trains a fresh language model (seeded from `train_config.seed`).
pub fn lm_train<T: Real>(
    vocab: Vocabulary,
    train: &[Vec<usize>],
    dev: &[Vec<usize>],
    config: &LmConfig,
    train_config: &TrainConfig,
) -> Result<(LanguageModel<T>, LearningCurve)> {
    if train.is_empty() {
        return Err(Error::Empty("language-model corpus"));
    }
    let mut rng = crate::seeded_rng(train_config.seed ^ 0x6c6d);
    let lm = LanguageModel::new(vocab, config, &mut rng)?;
    lm_continue(lm, train, dev, train_config)
}

/// Further trains an existing language model.
pub fn lm_continue<T: Real>(
    lm: LanguageModel<T>,
    train: &[Vec<usize>],
    dev: &[Vec<usize>],
    train_config: &TrainConfig,
) -> Result<(LanguageModel<T>, LearningCurve)> {
    let (model, curve) = trainer::train(
        lm.model,
        &as_pairs(train),
        &as_pairs(dev),
        train_config,
        &lm_mask(),
    )?;
    Ok((LanguageModel { model }, curve))
}
