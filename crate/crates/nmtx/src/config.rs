//! Flat `key=value` run configuration.
//!
//! Values are resolved in increasing order of precedence:
//!
//! 1. built-in desk-scale defaults;
//! 2. the config file given on the command line;
//! 3. `--set key=value` flags, applied left to right;
//! 4. dedicated flags such as `--seed` and `--l2`.
//!
//! Unknown keys are errors, so a typo never silently falls back to a default.

use std::path::Path;

use nmtx_core::lm::LmConfig;
use nmtx_core::tensor::AttentionKind;
use nmtx_core::trainer::TrainConfig;
use nmtx_core::ModelConfig;

use crate::error::{NmtxError, Result};
use crate::formats::{parse_kv, read_text};

/// Every recognised key with a one-line description.
pub const KEYS: [(&str, &str); 14] = [
    ("hidden_size", "LSTM and embedding width"),
    ("init_range", "uniform initialisation half-width"),
    ("attention_window", "half-width D of the local attention window"),
    ("attention", "local | global"),
    ("minibatch_size", "sentences per SGD step"),
    ("lr", "initial learning rate"),
    ("decay", "learning-rate factor on a dev plateau, in (0, 1)"),
    ("clip_threshold", "global gradient-norm clip"),
    ("epochs", "training epochs"),
    ("dropout_p", "dropout probability"),
    ("l2_lambda", "pull toward the parent weights (0 = off)"),
    ("seed", "random seed"),
    ("max_src_types", "cap on source vocabulary size (0 = no cap)"),
    ("max_tgt_types", "cap on target vocabulary size (0 = no cap)"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub max_src_types: Option<usize>,
    pub max_tgt_types: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::desk(4, 4);
        RunConfig {
            train: TrainConfig {
                dropout_p: model.dropout_p,
                ..TrainConfig::desk()
            },
            model,
            max_src_types: None,
            max_tgt_types: None,
        }
    }
}

fn bad(key: &str, value: &str, expected: &str) -> String {
    format!("`{key}={value}`: expected {expected}")
}

fn parse<T: std::str::FromStr>(key: &str, value: &str, expected: &str) -> Result<T, String> {
    value.parse().map_err(|_| bad(key, value, expected))
}

impl RunConfig {
    /// Defaults overridden by the file at `path`, if any.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            let entries = parse_kv(&read_text(path)?, path).map_err(|e| match e {
                NmtxError::Parse { path, line, message } => NmtxError::Config { path, line, message },
                other => other,
            })?;
            for e in entries {
                cfg.set(&e.key, &e.value).map_err(|message| NmtxError::Config {
                    path: path.to_path_buf(),
                    line: e.line,
                    message,
                })?;
            }
        }
        Ok(cfg)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| NmtxError::Usage(format!("--set `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim()).map_err(NmtxError::Usage)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "hidden_size" => m.hidden_size = parse(key, value, "a positive integer")?,
            "init_range" => m.init_range = parse(key, value, "a number")?,
            "attention_window" => m.attention_window = parse(key, value, "a positive integer")?,
            "attention" => {
                m.attention = match value {
                    "local" => AttentionKind::Local,
                    "global" => AttentionKind::Global,
                    _ => return Err(bad(key, value, "`local` or `global`")),
                }
            }
            "minibatch_size" => t.minibatch_size = parse(key, value, "a positive integer")?,
            "lr" => t.lr = parse(key, value, "a number")?,
            "decay" => t.decay = parse(key, value, "a number")?,
            "clip_threshold" => t.clip_threshold = parse(key, value, "a number")?,
            "epochs" => t.epochs = parse(key, value, "an integer")?,
            "dropout_p" => {
                t.dropout_p = parse(key, value, "a number")?;
                m.dropout_p = t.dropout_p;
            }
            "l2_lambda" => t.l2_lambda = parse(key, value, "a number")?,
            "seed" => t.seed = parse(key, value, "an unsigned integer")?,
            "max_src_types" => self.max_src_types = Some(parse(key, value, "an integer")?).filter(|&n| n > 0),
            "max_tgt_types" => self.max_tgt_types = Some(parse(key, value, "an integer")?).filter(|&n| n > 0),
            _ => {
                let known: Vec<&str> = KEYS.iter().map(|(k, _)| *k).collect();
                return Err(format!("unknown key `{key}`; known keys: {}", known.join(", ")));
            }
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
    }

    pub fn lm_config(&self) -> LmConfig {
        LmConfig {
            hidden_size: self.model.hidden_size,
            init_range: self.model.init_range,
        }
    }

    /// Checks both halves; the vocabulary sizes are filled in later.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let mut m = self.model.clone();
        m.src_vocab_size = m.src_vocab_size.max(4);
        m.tgt_vocab_size = m.tgt_vocab_size.max(4);
        m.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_documented_key_is_settable() {
        for (k, _) in KEYS {
            let v = match k {
                "attention" => "global",
                "decay" | "dropout_p" => "0.5",
                _ => "3",
            };
            RunConfig::default().set(k, v).unwrap();
        }
    }

    #[test]
    fn later_sources_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "epochs = 7\nlr=0.25\n").unwrap();
        let mut cfg = RunConfig::load(Some(&path)).unwrap();
        assert_eq!((cfg.train.epochs, cfg.train.lr), (7, 0.25));
        cfg.apply_overrides(&["epochs=9".into()]).unwrap();
        assert_eq!(cfg.train.epochs, 9);
        assert_eq!(cfg.train.lr, 0.25);
    }

    #[test]
    fn unknown_key_reports_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "epochs=2\nepoch=3\n").unwrap();
        let err = RunConfig::load(Some(&path)).unwrap_err();
        assert!(matches!(err, NmtxError::Config { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("unknown key `epoch`"));
    }
}
