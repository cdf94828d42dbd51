//! Two-layer LSTM encoder-decoder with local attention and feed-input.

mod forward;
mod graph;
mod params;

use alloc::string::String;

pub use forward::{DecoderState, EncoderOutput, StepOutput};
pub use graph::{minibatch_loss, Dropout, Minibatch, ParamLeaves};
pub use params::{AttentionParams, BlockName, FreezeMask, OutputLayer, ParameterBlocks};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::AttentionKind;
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden_size: usize,
    /// Stacked LSTM layers on each side; only 2 is supported.
    pub layers: usize,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub dropout_p: f64,
    pub init_range: f64,
    /// Half-width `D` of the local attention window.
    pub attention_window: usize,
    pub attention: AttentionKind,
    /// Where the weights came from, when this model was transferred.
    pub parent: Option<String>,
}

impl ModelConfig {
    /// Paper-scale settings (hidden 1000, window 10).
    pub fn paper(src_vocab_size: usize, tgt_vocab_size: usize) -> Self {
        ModelConfig {
            hidden_size: 1000,
            layers: 2,
            src_vocab_size,
            tgt_vocab_size,
            dropout_p: 0.5,
            init_range: 0.08,
            attention_window: 10,
            attention: AttentionKind::Local,
            parent: None,
        }
    }

    /// Desk-scale settings (hidden 64).
    pub fn desk(src_vocab_size: usize, tgt_vocab_size: usize) -> Self {
        ModelConfig {
            hidden_size: 64,
            ..Self::paper(src_vocab_size, tgt_vocab_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers != 2 {
            return Err(Error::InvalidConfig(alloc::format!(
                "layers must be 2, got {}",
                self.layers
            )));
        }
        if self.hidden_size == 0 {
            return Err(Error::InvalidConfig("hidden_size must be positive".into()));
        }
        if !(self.init_range >= 0.0 && self.init_range.is_finite()) {
            return Err(Error::InvalidConfig("init_range must be a nonnegative number".into()));
        }
        if self.attention_window == 0 {
            return Err(Error::InvalidConfig("attention_window must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidProbability {
                what: "dropout_p",
                value: self.dropout_p,
            });
        }
        if self.src_vocab_size < 4 || self.tgt_vocab_size < 4 {
            return Err(Error::InvalidConfig("vocabularies need at least the 4 reserved ids".into()));
        }
        Ok(())
    }
}

/// Samples every parameter uniformly from `[-init_range, init_range]`.
pub fn init_params<T: Real>(config: &ModelConfig, rng: &mut crate::Rng) -> Result<ParameterBlocks<T>> {
    config.validate()?;
    Ok(ParameterBlocks::uniform(
        config.hidden_size,
        config.src_vocab_size,
        config.tgt_vocab_size,
        config.init_range,
        rng,
    ))
}

/// A translation model: configuration, both vocabularies and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2Seq<T> {
    pub config: ModelConfig,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub params: ParameterBlocks<T>,
}

impl<T: Real> Seq2Seq<T> {
    /// Fresh model; the config's vocabulary sizes are taken from the vocabularies.
    pub fn new(
        mut config: ModelConfig,
        src_vocab: Vocabulary,
        tgt_vocab: Vocabulary,
        rng: &mut crate::Rng,
    ) -> Result<Self> {
        config.src_vocab_size = src_vocab.len();
        config.tgt_vocab_size = tgt_vocab.len();
        let params = init_params(&config, rng)?;
        Ok(Seq2Seq {
            config,
            src_vocab,
            tgt_vocab,
            params,
        })
    }

    /// Assembles a model from parts, checking that shapes agree.
    pub fn from_parts(
        config: ModelConfig,
        src_vocab: Vocabulary,
        tgt_vocab: Vocabulary,
        params: ParameterBlocks<T>,
    ) -> Result<Self> {
        config.validate()?;
        let expected = ParameterBlocks::<T>::zeros(config.hidden_size, src_vocab.len(), tgt_vocab.len());
        expected.check_same_shape(&params, "Seq2Seq::from_parts")?;
        if config.src_vocab_size != src_vocab.len() || config.tgt_vocab_size != tgt_vocab.len() {
            return Err(Error::VocabularyMismatch(
                "config vocabulary sizes disagree with the vocabularies".into(),
            ));
        }
        Ok(Seq2Seq {
            config,
            src_vocab,
            tgt_vocab,
            params,
        })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden_size
    }

    /// Same model in another precision.
    pub fn cast<U: Real>(&self) -> Seq2Seq<U> {
        Seq2Seq {
            config: self.config.clone(),
            src_vocab: self.src_vocab.clone(),
            tgt_vocab: self.tgt_vocab.clone(),
            params: self.params.cast(),
        }
    }
}
