//! `dnazen`: the pipeline as one subcommand-style binary.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;

const PRECEDENCE: &str = "\
Configuration precedence (later wins): built-in defaults, the TOML file
given by --config (or DNAZEN_CONFIG), DNAZEN_<SECTION>_<KEY> environment
variables (e.g. DNAZEN_TRAIN_LR=0.001, DNAZEN_SEED=3), then flags.
Log level comes from DNAZEN_LOG (default: info).

Exit status: 0 success, 1 usage or validation error, 2 runtime error.";

#[derive(Debug, Parser)]
#[command(name = "dnazen", version, about = "G-gram enhanced DNA language model pipeline", after_help = PRECEDENCE)]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads for training and evaluation (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a BPE token vocabulary, or import an existing one.
    TokenizerTrain(TokenizerTrainArgs),
    /// Mine a G-gram vocabulary from a tokenized corpus.
    GgramBuild(GgramBuildArgs),
    /// Write the G-gram matches of every sequence as JSON lines.
    GgramMatch(GgramMatchArgs),
    /// G-gram coverage table for a labeled task.
    GgramStats(GgramStatsArgs),
    /// Pre-train with whole G-gram masking.
    Pretrain(PretrainArgs),
    /// Fine-tune a checkpoint on a classification task, once per seed.
    Finetune(FinetuneArgs),
    /// Score fine-tuned checkpoints with MCC on every split.
    Eval(EvalArgs),
    /// Per-layer G-gram attention for a sample of sequences.
    AttentionReport(AttentionArgs),
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Input sequences.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,

    /// Sequence format: fasta or lines (default: by file extension).
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct VocabArgs {
    /// Token vocabulary JSON.
    #[arg(long, value_name = "PATH")]
    tokenizer: Option<PathBuf>,

    /// G-gram vocabulary JSON-lines.
    #[arg(long, value_name = "PATH")]
    ggrams: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TokenizerTrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,

    /// Target vocabulary size, specials included.
    #[arg(long)]
    vocab_size: Option<usize>,

    /// Where to write the vocabulary.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,

    /// Copy an external vocabulary file verbatim instead of training.
    #[arg(long, value_name = "PATH")]
    import_vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GgramBuildArgs {
    #[command(flatten)]
    corpus: CorpusArgs,

    /// Token vocabulary JSON.
    #[arg(long, value_name = "PATH")]
    tokenizer: Option<PathBuf>,

    /// Where to write the G-gram vocabulary.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,

    /// PMI threshold; adjacent pairs below it are split.
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,

    #[arg(long)]
    min_len: Option<usize>,

    #[arg(long)]
    max_len: Option<usize>,

    /// Minimum corpus frequency for a G-gram.
    #[arg(long)]
    min_freq: Option<u64>,
}

#[derive(Debug, Args)]
struct GgramMatchArgs {
    #[command(flatten)]
    corpus: CorpusArgs,

    #[command(flatten)]
    vocab: VocabArgs,

    /// Keep at most this many matches per sequence (longest, then leftmost).
    #[arg(long)]
    max_matches: Option<usize>,

    /// Output file (default: stdout).
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GgramStatsArgs {
    #[command(flatten)]
    vocab: VocabArgs,

    /// Task directory with train.csv, dev.csv and test.csv.
    #[arg(long, value_name = "DIR")]
    task: Option<PathBuf>,

    #[arg(long, default_value = "-")]
    species: String,

    /// Dataset name for the table (default: the task name).
    #[arg(long)]
    dataset: Option<String>,

    /// Output file (default: stdout).
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    hidden: Option<usize>,

    #[arg(long)]
    heads: Option<usize>,

    #[arg(long)]
    token_layers: Option<usize>,

    #[arg(long)]
    ggram_layers: Option<usize>,

    /// Longest token sequence, specials included.
    #[arg(long)]
    max_len: Option<usize>,

    /// Most G-gram matches per input.
    #[arg(long)]
    max_matches: Option<usize>,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,

    #[command(flatten)]
    vocab: VocabArgs,

    #[command(flatten)]
    model: ModelArgs,

    /// Output directory for model.ckpt, metrics.jsonl and step checkpoints.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Continue from this checkpoint instead of a fresh model.
    #[arg(long, value_name = "PATH")]
    init: Option<PathBuf>,

    /// Model initialization seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Seed of the masking and shuffling streams.
    #[arg(long)]
    mask_seed: Option<u64>,

    /// Optimizer steps; overrides --epochs.
    #[arg(long)]
    steps: Option<usize>,

    #[arg(long)]
    epochs: Option<usize>,

    #[arg(long)]
    batch_size: Option<usize>,

    #[arg(long)]
    lr: Option<f32>,

    #[arg(long)]
    mask_ratio: Option<f64>,

    /// Write a checkpoint every N steps (0 = only the final one).
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    #[command(flatten)]
    vocab: VocabArgs,

    /// Pre-trained checkpoint.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,

    /// Task directory with train.csv, dev.csv and test.csv.
    #[arg(long, value_name = "DIR")]
    task: Option<PathBuf>,

    /// Declared class count (default: 1 + largest label).
    #[arg(long)]
    num_classes: Option<usize>,

    /// Comma-separated seeds; one run each.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    #[arg(long)]
    epochs: Option<usize>,

    #[arg(long)]
    batch_size: Option<usize>,

    #[arg(long)]
    lr: Option<f32>,

    /// Output directory for seed_<n>.ckpt files and finetune.json.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    vocab: VocabArgs,

    /// Fine-tuned checkpoint, or a directory of seed_<n>.ckpt files.
    /// Repeatable.
    #[arg(long, value_name = "PATH")]
    checkpoint: Vec<PathBuf>,

    /// Task directory with train.csv, dev.csv and test.csv.
    #[arg(long, value_name = "DIR")]
    task: Option<PathBuf>,

    #[arg(long)]
    num_classes: Option<usize>,

    /// Seeds paired with the checkpoints, in order (default: from
    /// seed_<n> file names, else 1, 2, ...).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Dataset name for the report (default: the task name).
    #[arg(long)]
    dataset: Option<String>,

    /// Write <PREFIX>.tsv and <PREFIX>.json instead of printing TSV.
    #[arg(long, value_name = "PREFIX")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AttentionArgs {
    #[command(flatten)]
    vocab: VocabArgs,

    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,

    /// Sequences to report on; alternatively use --task.
    #[command(flatten)]
    corpus: CorpusArgs,

    /// Take the sample from a task split instead of --input.
    #[arg(long, value_name = "DIR", conflicts_with = "input")]
    task: Option<PathBuf>,

    #[arg(long, default_value = "test")]
    split: String,

    /// Only sequences with this label.
    #[arg(long)]
    label: Option<usize>,

    /// Flag G-grams whose text contains this pattern.
    #[arg(long)]
    motif: Option<String>,

    #[arg(long, default_value_t = 5)]
    top_k: usize,

    /// Report on at most this many sequences.
    #[arg(long)]
    limit: Option<usize>,

    /// Write <PREFIX>.tsv and <PREFIX>.json instead of printing TSV.
    #[arg(long, value_name = "PREFIX")]
    output: Option<PathBuf>,
}

/// A usage or validation problem detected by the CLI itself.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<dnazen::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
    }
    2
}

fn set<T: Clone>(slot: &mut T, flag: &Option<T>) {
    if let Some(v) = flag {
        *slot = v.clone();
    }
}

fn set_opt<T: Clone>(slot: &mut Option<T>, flag: &Option<T>) {
    if flag.is_some() {
        *slot = flag.clone();
    }
}

impl CorpusArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        set_opt(&mut cfg.paths.corpus, &self.input);
        set_opt(&mut cfg.paths.format, &self.format);
    }
}

impl VocabArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        set_opt(&mut cfg.paths.tokenizer, &self.tokenizer);
        set_opt(&mut cfg.paths.ggrams, &self.ggrams);
    }
}

impl ModelArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let m = &mut cfg.model;
        set(&mut m.hidden, &self.hidden);
        set(&mut m.heads, &self.heads);
        set(&mut m.token_layers, &self.token_layers);
        set(&mut m.ggram_layers, &self.ggram_layers);
        set(&mut m.max_len, &self.max_len);
        set(&mut m.max_matches, &self.max_matches);
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::TokenizerTrain(_) => "tokenizer-train",
            Command::GgramBuild(_) => "ggram-build",
            Command::GgramMatch(_) => "ggram-match",
            Command::GgramStats(_) => "ggram-stats",
            Command::Pretrain(_) => "pretrain",
            Command::Finetune(_) => "finetune",
            Command::Eval(_) => "eval",
            Command::AttentionReport(_) => "attention-report",
        }
    }

    /// Folds this command's flags into the config.
    fn apply(&self, cfg: &mut PipelineConfig) {
        match self {
            Command::TokenizerTrain(a) => {
                a.corpus.apply(cfg);
                set(&mut cfg.tokenizer.vocab_size, &a.vocab_size);
                set_opt(&mut cfg.paths.tokenizer, &a.output);
            }
            Command::GgramBuild(a) => {
                a.corpus.apply(cfg);
                set_opt(&mut cfg.paths.tokenizer, &a.tokenizer);
                set_opt(&mut cfg.paths.ggrams, &a.output);
                let e = &mut cfg.extract;
                set(&mut e.theta, &a.theta);
                set(&mut e.min_len, &a.min_len);
                set(&mut e.max_len, &a.max_len);
                set(&mut e.min_freq, &a.min_freq);
            }
            Command::GgramMatch(a) => {
                a.corpus.apply(cfg);
                a.vocab.apply(cfg);
            }
            Command::GgramStats(a) => {
                a.vocab.apply(cfg);
                set_opt(&mut cfg.paths.task, &a.task);
            }
            Command::Pretrain(a) => {
                a.corpus.apply(cfg);
                a.vocab.apply(cfg);
                a.model.apply(cfg);
                set_opt(&mut cfg.paths.out_dir, &a.output_dir);
                set(&mut cfg.seed, &a.seed);
                let t = &mut cfg.train;
                set(&mut t.seed, &a.mask_seed);
                set_opt(&mut t.max_steps, &a.steps);
                set(&mut t.epochs, &a.epochs);
                set(&mut t.batch_size, &a.batch_size);
                set(&mut t.lr, &a.lr);
                set(&mut t.mask_ratio, &a.mask_ratio);
                set(&mut t.checkpoint_every, &a.checkpoint_every);
            }
            Command::Finetune(a) => {
                a.vocab.apply(cfg);
                set_opt(&mut cfg.paths.checkpoint, &a.checkpoint);
                set_opt(&mut cfg.paths.task, &a.task);
                set_opt(&mut cfg.paths.out_dir, &a.output_dir);
                let f = &mut cfg.finetune;
                set(&mut f.seeds, &a.seeds);
                set(&mut f.epochs, &a.epochs);
                set(&mut f.batch_size, &a.batch_size);
                set(&mut f.lr, &a.lr);
            }
            Command::Eval(a) => {
                a.vocab.apply(cfg);
                if let Some(first) = a.checkpoint.first() {
                    cfg.paths.checkpoint = Some(first.clone());
                }
                set_opt(&mut cfg.paths.task, &a.task);
            }
            Command::AttentionReport(a) => {
                a.vocab.apply(cfg);
                a.corpus.apply(cfg);
                set_opt(&mut cfg.paths.checkpoint, &a.checkpoint);
                set_opt(&mut cfg.paths.task, &a.task);
            }
        }
        if cfg.workers != 0 {
            cfg.train.workers = cfg.workers;
            cfg.finetune.workers = cfg.workers;
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config_path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os("DNAZEN_CONFIG").map(PathBuf::from));
    let mut cfg = PipelineConfig::resolve(config_path.as_deref(), std::env::vars())?;
    set(&mut cfg.workers, &cli.workers);
    cli.command.apply(&mut cfg);
    log::info!("{} effective config:\n{}", cli.command.name(), cfg.to_toml().trim_end());
    match &cli.command {
        Command::TokenizerTrain(a) => commands::tokenizer_train(&cfg, a.import_vocab.as_deref()),
        Command::GgramBuild(_) => commands::ggram_build(&cfg),
        Command::GgramMatch(a) => commands::ggram_match(&cfg, a.max_matches, a.output.as_deref()),
        Command::GgramStats(a) => commands::ggram_stats(&cfg, &a.species, a.dataset.as_deref(), a.output.as_deref()),
        Command::Pretrain(a) => commands::pretrain(&cfg, a.init.as_deref()),
        Command::Finetune(a) => commands::finetune(&cfg, a.num_classes),
        Command::Eval(a) => commands::eval(&cfg, &a.checkpoint, a.num_classes, a.seeds.as_deref(), a.dataset.as_deref(), a.output.as_deref()),
        Command::AttentionReport(a) => commands::attention_report(
            &cfg,
            &commands::AttentionOptions {
                split: &a.split,
                label: a.label,
                motif: a.motif.as_deref(),
                top_k: a.top_k,
                limit: a.limit,
                output: a.output.as_deref(),
            },
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("DNAZEN_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
