//! The `nmtx` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nmtx_core::bleu::corpus_stats;
use nmtx_core::decoder::{beam_search, unk_replace, Ensemble};
use nmtx_core::lm::{lm_continue, LanguageModel};
use nmtx_core::rescore::{
    add_feature, align_by_id, rerank, rerank_indices, simplex_grid, tune_weights_on, HypothesisScorer, NBestEntry, NBestList,
    NBestSentence,
};
use nmtx_core::synth::{
    gen_toy_bitext, make_copy_corpus, make_perm_corpus, permute_vocabulary, GrammarSpec, Reorder, Sentence, ToyGrammar,
};
use nmtx_core::trainer::{train_with, EpochRecord, LearningCurve, Pair, TrainHooks};
use nmtx_core::transfer::{
    compose_ttables, dictionary_assignment, random_assignment, transfer_init, AssignmentMap,
};
use nmtx_core::model::FreezeMask;
use nmtx_core::{seeded_rng, Seq2Seq, Vocabulary};

use crate::atomic::write_atomic_str;
use crate::config::RunConfig;
use crate::container::{load_lm, load_model, save_lm, save_model};
use crate::error::{exit, NmtxError, Result};
use crate::formats::{
    corpus_to_text, read_corpus, read_nbest, read_parallel, read_ttable, read_vocab, read_weights, write_corpus,
    write_curve, write_nbest, write_parallel, write_ttable, write_weights,
};

#[derive(Debug, Parser)]
#[command(name = "nmtx", version, about = "Desk-scale transfer learning for low-resource neural translation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a translation model, from scratch or from a parent.
    Train(TrainArgs),
    /// Translate a file with one model or an ensemble.
    Decode(DecodeArgs),
    /// Add model scores to an n-best list and rerank it.
    Rescore(RescoreArgs),
    /// Grid-search reranking weights for dev BLEU.
    Tune(TuneArgs),
    /// Corpus BLEU of a hypothesis file against a reference file.
    Eval(EvalArgs),
    /// Train a target-side language model.
    LmTrain(LmTrainArgs),
    /// Synthetic corpora.
    Synth(SynthArgs),
}

/// Flags shared by commands that read a run configuration.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat key=value configuration file.
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable; applied after the file).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Random seed (overrides `seed` from the file and --set).
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        cfg.apply_overrides(&self.set)?;
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Source and target training files.
    #[arg(long, num_args = 2, value_names = ["SRC", "TGT"], required = true)]
    pub train: Vec<PathBuf>,
    /// Source and target dev files.
    #[arg(long, num_args = 2, value_names = ["SRC", "TGT"], required = true)]
    pub dev: Vec<PathBuf>,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Learning-curve CSV (default: `<out>.curve.csv`).
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Parent model to initialise from.
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    /// Comma-separated blocks to freeze. Default: target input and output
    /// embeddings with --init-from, nothing otherwise.
    #[arg(long, value_name = "BLOCK,...")]
    pub freeze: Option<String>,
    /// Child-to-parent source row assignment: `identity`, `random` or
    /// `dict:FILE[,FILE]` (one composed t-table, or child→pivot and
    /// pivot→parent tables to compose). Default: identity when the source
    /// vocabularies coincide, random otherwise.
    #[arg(long)]
    pub assignment: Option<String>,
    /// Strength of the L2 pull toward the parent weights.
    #[arg(long)]
    pub l2: Option<f64>,
    /// Use this source vocabulary instead of building one from --train.
    #[arg(long)]
    pub src_vocab: Option<PathBuf>,
    /// Use this target vocabulary (default: the parent's with --init-from,
    /// otherwise built from --train).
    #[arg(long)]
    pub tgt_vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Model files; more than one decodes with their ensemble.
    #[arg(long, value_delimiter = ',', required = true)]
    pub model: Vec<PathBuf>,
    /// Source sentences, one per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    /// Maximum number of target tokens per sentence.
    #[arg(long, default_value_t = 100)]
    pub max_len: usize,
    /// t-table used to translate the source word aligned to each `<unk>`.
    #[arg(long)]
    pub unk_dict: Option<PathBuf>,
    /// Emit the k best hypotheses per sentence in n-best format.
    #[arg(long)]
    pub nbest: Option<usize>,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted for uniformity; decoding is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Model-based features to add to an n-best list.
#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// Translation model(s) to score hypotheses with (comma-separated for an ensemble).
    #[arg(long, value_delimiter = ',')]
    pub model: Vec<PathBuf>,
    /// Source sentences aligned with the n-best ids (required with --model).
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Feature name for the translation-model score.
    #[arg(long, default_value = "nmt")]
    pub model_feature: String,
    /// Language model to score hypotheses with.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long, default_value = "lm")]
    pub lm_feature: String,
}

#[derive(Debug, Args)]
pub struct RescoreArgs {
    #[arg(long)]
    pub nbest: PathBuf,
    /// key=value feature weights; `external` is the n-best total.
    #[arg(long)]
    pub weights: PathBuf,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Write the n-best list with the added features.
    #[arg(long)]
    pub nbest_out: Option<PathBuf>,
    /// Reranked 1-best output (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub nbest: PathBuf,
    /// Reference translations aligned with the n-best ids.
    #[arg(long)]
    pub refs: PathBuf,
    /// Comma-separated feature names to weight (`external` is the total).
    #[arg(long, value_delimiter = ',', default_value = "external,nmt")]
    pub features: Vec<String>,
    /// Grid step on the weight simplex.
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    #[command(flatten)]
    pub add: FeatureArgs,
    /// Output weights file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct LmTrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Monolingual training text.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Learning-curve CSV (default: `<out>.curve.csv`).
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Use this vocabulary instead of building one from --train.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub kind: SynthCommand,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Relabel every word type through one random bijection.
    Permute {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the `original permuted` type map.
        #[arg(long)]
        map_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parallel corpus of (shuffled sentence, sentence).
    PermCorpus {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        src_out: PathBuf,
        #[arg(long)]
        tgt_out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parallel corpus of (sentence, sentence).
    Copy {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        src_out: PathBuf,
        #[arg(long)]
        tgt_out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sample a toy bitext from a bigram + dictionary + reordering grammar.
    Toy(ToyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReorderArg {
    Monotone,
    LocalSwap,
    Reverse,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub src_out: PathBuf,
    #[arg(long)]
    pub tgt_out: PathBuf,
    /// Sampling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub tgt_types: usize,
    #[arg(long, default_value_t = 40)]
    pub src_types: usize,
    #[arg(long, default_value_t = 3)]
    pub min_len: usize,
    #[arg(long, default_value_t = 8)]
    pub max_len: usize,
    #[arg(long, default_value_t = 5)]
    pub branching: usize,
    #[arg(long, default_value = "f")]
    pub src_prefix: String,
    #[arg(long, default_value = "e")]
    pub tgt_prefix: String,
    /// Seeds the target language (share it to share a target side).
    #[arg(long, default_value_t = 1)]
    pub target_seed: u64,
    /// Seeds the source dictionary.
    #[arg(long, default_value_t = 2)]
    pub source_seed: u64,
    #[arg(long, value_enum, default_value_t = ReorderArg::LocalSwap)]
    pub reorder: ReorderArg,
    /// Write the source→target t-table of the grammar.
    #[arg(long)]
    pub ttable_out: Option<PathBuf>,
    /// Write the target→source t-table of the grammar.
    #[arg(long)]
    pub reverse_ttable_out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("nmtx: error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Rescore(a) => cmd_rescore(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Eval(a) => cmd_eval(a),
        Command::LmTrain(a) => cmd_lm_train(a),
        Command::Synth(a) => cmd_synth(a.kind),
    }
}

// ------------------------------------------------------------------ helpers

fn curve_path(out: &Path, curve: Option<PathBuf>) -> PathBuf {
    curve.unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".curve.csv");
        PathBuf::from(s)
    })
}

fn encode_pairs(pairs: &[(Sentence, Sentence)], src: &Vocabulary, tgt: &Vocabulary) -> Vec<Pair> {
    pairs
        .iter()
        .map(|(s, t)| Pair::new(src.encode(s), tgt.encode(t)))
        .collect()
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic_str(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| NmtxError::io("<stdout>", e))
        }
    }
}

fn log_epoch(r: &EpochRecord) {
    log::info!(
        "epoch {:>3}  train ppl {:>9.3}  dev ppl {:>9.3}  lr {:.4}  {:.1}s",
        r.epoch,
        r.train_ppl,
        r.dev_ppl,
        r.lr,
        r.seconds
    );
}

/// Runs the trainer with a wall clock and per-epoch logging.
fn run_training(
    model: Seq2Seq<f32>,
    train: &[Pair],
    dev: &[Pair],
    cfg: &RunConfig,
    mask: &FreezeMask,
    anchor: Option<&nmtx_core::ParameterBlocks<f32>>,
) -> Result<(Seq2Seq<f32>, LearningCurve)> {
    let start = Instant::now();
    let clock = move || start.elapsed().as_secs_f64();
    let mut on_epoch = log_epoch;
    let hooks = TrainHooks {
        anchor,
        clock: Some(&clock),
        on_epoch: Some(&mut on_epoch),
    };
    Ok(train_with(model, train, dev, &cfg.train, mask, hooks)?)
}

fn parse_assignment(
    spec: Option<&str>,
    child_src: &Vocabulary,
    parent_src: &Vocabulary,
    seed: u64,
) -> Result<AssignmentMap> {
    let identity = || -> Result<AssignmentMap> {
        if child_src != parent_src {
            return Err(NmtxError::Usage(
                "identity assignment needs the parent's source vocabulary".into(),
            ));
        }
        Ok(AssignmentMap::identity(child_src.len()))
    };
    match spec {
        None if child_src == parent_src => identity(),
        None | Some("random") => Ok(random_assignment(child_src, parent_src.len(), seed)?),
        Some("identity") => identity(),
        Some(s) if s.starts_with("dict:") => {
            let files: Vec<&str> = s["dict:".len()..].split(',').filter(|f| !f.is_empty()).collect();
            let table = match files.as_slice() {
                [one] => read_ttable(Path::new(one))?,
                [a, b] => compose_ttables(&read_ttable(Path::new(a))?, &read_ttable(Path::new(b))?),
                _ => {
                    return Err(NmtxError::Usage(
                        "--assignment dict: takes one or two t-table files".into(),
                    ))
                }
            };
            Ok(dictionary_assignment(&table, child_src, parent_src, seed)?)
        }
        Some(other) => Err(NmtxError::Usage(format!(
            "unknown assignment `{other}`; use identity, random or dict:FILE[,FILE]"
        ))),
    }
}

// ---------------------------------------------------------------- commands

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    if let Some(l2) = a.l2 {
        cfg.train.l2_lambda = l2;
    }
    cfg.validate()?;
    let mask = match &a.freeze {
        Some(list) => FreezeMask::parse_list(list)?,
        None if a.init_from.is_some() => FreezeMask::child_default(),
        None => FreezeMask::none(),
    };
    if cfg.train.l2_lambda > 0.0 && a.init_from.is_none() {
        return Err(NmtxError::Usage("--l2 needs --init-from".into()));
    }
    let train_text = read_parallel(&a.train[0], &a.train[1])?;
    let dev_text = read_parallel(&a.dev[0], &a.dev[1])?;
    let seed = cfg.train.seed;

    let parent = a.init_from.as_deref().map(load_model).transpose()?;
    let src_vocab = match &a.src_vocab {
        Some(p) => read_vocab(p)?,
        None => Vocabulary::build(train_text.iter().map(|(s, _)| s), cfg.max_src_types),
    };
    let tgt_vocab = match (&a.tgt_vocab, &parent) {
        (Some(p), _) => read_vocab(p)?,
        (None, Some(parent)) => parent.tgt_vocab.clone(),
        (None, None) => Vocabulary::build(train_text.iter().map(|(_, t)| t), cfg.max_tgt_types),
    };
    let train = encode_pairs(&train_text, &src_vocab, &tgt_vocab);
    let dev = encode_pairs(&dev_text, &src_vocab, &tgt_vocab);

    let (model, curve) = match (&parent, &a.init_from) {
        (Some(parent), Some(parent_path)) => {
            let assignment = parse_assignment(a.assignment.as_deref(), &src_vocab, &parent.src_vocab, seed)?;
            let mut child_config = parent.config.clone();
            child_config.parent = Some(parent_path.display().to_string());
            let child = transfer_init(
                parent,
                child_config,
                src_vocab,
                tgt_vocab,
                &assignment,
                &mut seeded_rng(seed),
            )?;
            let anchor = (cfg.train.l2_lambda > 0.0).then(|| child.params.clone());
            log::info!(
                "transfer from {}: frozen blocks [{}]",
                parent_path.display(),
                mask.frozen_blocks().iter().map(|b| b.as_str()).collect::<Vec<_>>().join(", ")
            );
            run_training(child, &train, &dev, &cfg, &mask, anchor.as_ref())?
        }
        _ => {
            if a.assignment.is_some() {
                return Err(NmtxError::Usage("--assignment needs --init-from".into()));
            }
            let model = Seq2Seq::new(cfg.model.clone(), src_vocab, tgt_vocab, &mut seeded_rng(seed))?;
            run_training(model, &train, &dev, &cfg, &mask, None)?
        }
    };
    save_model(&model, &a.out)?;
    write_curve(&curve_path(&a.out, a.curve), &curve)?;
    if let Some(best) = curve.best_dev() {
        log::info!("best dev perplexity {best:.3}; model written to {}", a.out.display());
    }
    Ok(())
}

fn load_ensemble(paths: &[PathBuf]) -> Result<Vec<Seq2Seq<f32>>> {
    let models = paths.iter().map(|p| load_model(p)).collect::<Result<Vec<_>>>()?;
    if let Some((first, rest)) = models.split_first() {
        for (m, path) in rest.iter().zip(&paths[1..]) {
            if m.src_vocab != first.src_vocab {
                return Err(nmtx_core::Error::VocabularyMismatch(format!(
                    "{} has a different source vocabulary from {}",
                    path.display(),
                    paths[0].display()
                ))
                .into());
            }
        }
    }
    Ok(models)
}

fn cmd_decode(a: DecodeArgs) -> Result<()> {
    let models = load_ensemble(&a.model)?;
    let ensemble = Ensemble::new(models.iter().collect())?;
    let dict = a.unk_dict.as_deref().map(read_ttable).transpose()?;
    let input = read_corpus(&a.input)?;
    let src_vocab = &models[0].src_vocab;
    let tgt_vocab = &models[0].tgt_vocab;
    let beam = a.beam.max(a.nbest.unwrap_or(0));

    let mut out = String::new();
    let mut nbest = NBestList::default();
    for (id, tokens) in input.iter().enumerate() {
        let hyps = if tokens.is_empty() {
            Vec::new()
        } else {
            beam_search(&ensemble, &src_vocab.encode(tokens), beam, a.max_len)?
        };
        match a.nbest {
            None => {
                let line = hyps
                    .first()
                    .map(|h| unk_replace(h, tgt_vocab, tokens, dict.as_ref()).join(" "))
                    .unwrap_or_default();
                out.push_str(&line);
                out.push('\n');
            }
            Some(k) => {
                // an empty hypothesis cannot be rescored, so it is left out
                let entries: Vec<NBestEntry> = hyps
                    .iter()
                    .filter(|h| !h.tokens.is_empty())
                    .take(k)
                    .enumerate()
                    .map(|(r, h)| NBestEntry {
                        tokens: unk_replace(h, tgt_vocab, tokens, dict.as_ref()),
                        features: Default::default(),
                        total: h.score(),
                        rank: r + 1,
                        line: 0,
                    })
                    .collect();
                if !entries.is_empty() {
                    nbest.sentences.push(NBestSentence { id, entries });
                }
            }
        }
    }
    if a.nbest.is_some() {
        out = nbest.to_text();
    }
    emit(a.out.as_deref(), &out)
}

/// Adds the features requested by `f` to `nbest`.
/// Returns the number of source lines when a source file was read.
fn add_model_features(nbest: &mut NBestList, f: &FeatureArgs, context: &Path) -> Result<Option<usize>> {
    let with_path = |e: nmtx_core::Error| match e {
        nmtx_core::Error::Parse { line, message } => NmtxError::Parse {
            path: context.to_path_buf(),
            line,
            message,
        },
        other => other.into(),
    };
    let mut lines = None;
    if !f.model.is_empty() {
        let source = f
            .source
            .as_deref()
            .ok_or_else(|| NmtxError::Usage("--model needs --source".into()))?;
        let sources = read_corpus(source)?;
        let models = load_ensemble(&f.model)?;
        let ensemble = Ensemble::new(models.iter().collect())?;
        let scorer: &dyn HypothesisScorer = if models.len() == 1 { &models[0] } else { &ensemble };
        add_feature(nbest, Some(&sources), scorer, &f.model_feature).map_err(with_path)?;
        lines = Some(sources.len());
    }
    if let Some(lm_path) = &f.lm {
        let lm: LanguageModel<f32> = load_lm(lm_path)?;
        add_feature(nbest, None, &lm, &f.lm_feature).map_err(with_path)?;
    }
    Ok(lines)
}

fn cmd_rescore(a: RescoreArgs) -> Result<()> {
    let mut nbest = read_nbest(&a.nbest)?;
    let lines = add_model_features(&mut nbest, &a.features, &a.nbest)?;
    if let Some(p) = &a.nbest_out {
        write_nbest(p, &nbest)?;
    }
    let weights = read_weights(&a.weights)?;
    let names: Vec<&str> = weights.iter().map(|(n, _)| n.as_str()).collect();
    let values: Vec<f64> = weights.iter().map(|(_, w)| *w).collect();
    // one output line per sentence id; ids without entries give empty lines
    let lines = lines.unwrap_or_else(|| nbest.sentences.last().map_or(0, |s| s.id + 1));
    let best = align_by_id(&nbest, rerank(&nbest, &names, &values)?, lines)?;
    emit(a.out.as_deref(), &corpus_to_text(&best))
}

fn cmd_tune(a: TuneArgs) -> Result<()> {
    let mut nbest = read_nbest(&a.nbest)?;
    add_model_features(&mut nbest, &a.add, &a.nbest)?;
    let refs = read_corpus(&a.refs)?;
    let names: Vec<&str> = a.features.iter().map(String::as_str).collect();
    let grid = simplex_grid(names.len(), a.step)?;
    let (weights, score) = tune_weights_on(&nbest, &refs, &names, &grid)?;
    let baseline = corpus_stats(&align_by_id(&nbest, nbest.external_one_best(), refs.len())?, &refs)?.score();
    let picks = rerank_indices(&nbest, &names, &weights)?;
    let changed = nbest
        .sentences
        .iter()
        .zip(&picks)
        .filter(|(s, &i)| s.entries.get(i).map(|e| e.rank) != Some(1))
        .count();
    let named: Vec<(String, f64)> = a.features.iter().cloned().zip(weights).collect();
    write_weights(&a.out, &named)?;
    println!("BLEU={score:.2} (external 1-best {baseline:.2}; {changed} sentences changed)");
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let hyps = read_corpus(&a.hyp)?;
    let refs = read_corpus(&a.reference)?;
    if hyps.len() != refs.len() {
        return Err(NmtxError::Parse {
            path: a.hyp.clone(),
            line: hyps.len().min(refs.len()) + 1,
            message: format!("{} hypotheses for {} references", hyps.len(), refs.len()),
        });
    }
    let stats = corpus_stats(&hyps, &refs)?;
    println!("BLEU={:.1}", stats.score());
    Ok(())
}

fn cmd_lm_train(a: LmTrainArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    cfg.validate()?;
    let train_text: Vec<Sentence> = read_corpus(&a.train)?;
    let dev_text: Vec<Sentence> = read_corpus(&a.dev)?;
    for (path, corpus) in [(&a.train, &train_text), (&a.dev, &dev_text)] {
        if let Some(i) = corpus.iter().position(|s| s.is_empty()) {
            return Err(NmtxError::Parse {
                path: path.clone(),
                line: i + 1,
                message: "empty sentence".into(),
            });
        }
    }
    let vocab = match &a.vocab {
        Some(p) => read_vocab(p)?,
        None => Vocabulary::build(train_text.iter(), cfg.max_tgt_types),
    };
    let train: Vec<Vec<usize>> = train_text.iter().map(|s| vocab.encode(s)).collect();
    let dev: Vec<Vec<usize>> = dev_text.iter().map(|s| vocab.encode(s)).collect();
    let lm = LanguageModel::<f32>::new(vocab, &cfg.lm_config(), &mut seeded_rng(cfg.train.seed))?;
    let (lm, curve) = lm_continue(lm, &train, &dev, &cfg.train)?;
    for r in &curve.records {
        log_epoch(r);
    }
    save_lm(&lm, &a.out)?;
    write_curve(&curve_path(&a.out, a.curve), &curve)
}

fn cmd_synth(kind: SynthCommand) -> Result<()> {
    match kind {
        SynthCommand::Permute {
            input,
            out,
            map_out,
            seed,
        } => {
            let (perm, map) = permute_vocabulary(&read_corpus(&input)?, seed);
            write_corpus(&out, &perm)?;
            if let Some(p) = map_out {
                let text: String = map.iter().map(|(k, v)| format!("{k} {v}\n")).collect();
                write_atomic_str(&p, &text)?;
            }
            Ok(())
        }
        SynthCommand::PermCorpus {
            input,
            src_out,
            tgt_out,
            seed,
        } => write_parallel(&src_out, &tgt_out, &make_perm_corpus(&read_corpus(&input)?, seed)),
        SynthCommand::Copy {
            input,
            src_out,
            tgt_out,
            seed: _,
        } => write_parallel(&src_out, &tgt_out, &make_copy_corpus(&read_corpus(&input)?)),
        SynthCommand::Toy(t) => {
            let spec = GrammarSpec {
                tgt_types: t.tgt_types,
                src_types: t.src_types,
                min_len: t.min_len,
                max_len: t.max_len,
                branching: t.branching,
                src_prefix: t.src_prefix,
                tgt_prefix: t.tgt_prefix,
                target_seed: t.target_seed,
                source_seed: t.source_seed,
                reorder: match t.reorder {
                    ReorderArg::Monotone => Reorder::Monotone,
                    ReorderArg::LocalSwap => Reorder::LocalSwap,
                    ReorderArg::Reverse => Reorder::Reverse,
                },
            };
            let pairs = gen_toy_bitext(&spec, t.seed, t.count)?;
            write_parallel(&t.src_out, &t.tgt_out, &pairs)?;
            if t.ttable_out.is_some() || t.reverse_ttable_out.is_some() {
                let g = ToyGrammar::new(spec)?;
                if let Some(p) = &t.ttable_out {
                    write_ttable(p, &g.src_to_tgt_table())?;
                }
                if let Some(p) = &t.reverse_ttable_out {
                    write_ttable(p, &g.tgt_to_src_table())?;
                }
            }
            Ok(())
        }
    }
}
