//! `pctx` command-line driver: runs the pipeline stage by stage over a run
//! directory of file artifacts.

mod manifest;
mod stages;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pctx::config::PipelineConfig;
use workspace::{AppError, Workspace};

#[derive(Parser)]
#[command(
    name = "pctx",
    about = "Personalized context-aware action tokenizer and generative-retrieval harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    overrides: ConfigOverrides,

    /// Run directory holding stage artifacts.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,

    /// TOML config file; flags override individual fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker thread cap (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct ConfigOverrides {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// static | multi | personalized
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<f32>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Beam width for decoding.
    #[arg(long, global = true)]
    beam: Option<usize>,
    #[arg(long = "max-seq-len", global = true)]
    max_seq_len: Option<usize>,
    #[arg(long = "min-interactions", global = true)]
    min_interactions: Option<usize>,
    /// Decay of the builtin context encoder.
    #[arg(long = "context-decay", global = true)]
    context_decay: Option<f32>,
    /// Comma-separated content codebook sizes, e.g. 256,256,256.
    #[arg(long = "codebook-sizes", global = true, value_delimiter = ',')]
    codebook_sizes: Option<Vec<usize>>,
    #[arg(long = "conflict-alphabet", global = true)]
    conflict_alphabet: Option<usize>,
    /// Semantic ID length (content digits + 1).
    #[arg(long, global = true)]
    digits: Option<usize>,
    /// Laplace smoothing of the count model.
    #[arg(long, global = true)]
    smoothing: Option<f64>,
    #[arg(long = "signature-items", global = true)]
    signature_items: Option<usize>,
    #[arg(long = "train-epochs", global = true)]
    train_epochs: Option<usize>,
    /// uniform-others | weighted-others | uniform-all
    #[arg(long = "augment-distribution", global = true)]
    augment_distribution: Option<String>,
    #[arg(long = "alloc-groups", global = true)]
    alloc_groups: Option<usize>,
    #[arg(long = "alloc-gamma-shape", global = true)]
    alloc_gamma_shape: Option<f64>,
    #[arg(long = "alloc-c-start", global = true)]
    alloc_c_start: Option<usize>,
    #[arg(long = "alloc-delta", global = true)]
    alloc_delta: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load, filter, and canonicalize an interaction log (and optional
    /// embedding tables).
    Ingest {
        /// Raw interactions: `user<TAB>item<TAB>timestamp` lines.
        #[arg(long)]
        interactions: PathBuf,
        /// Item feature embeddings in the `N D` header format.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Precomputed context embeddings keyed `user:position`.
        #[arg(long)]
        contexts: Option<PathBuf>,
    },
    /// Generate a seeded synthetic multi-intent corpus.
    Synth {
        #[arg(long, default_value_t = 2000)]
        users: usize,
        #[arg(long, default_value_t = 300)]
        items: usize,
        #[arg(long, default_value_t = 3)]
        intents: usize,
    },
    /// Condense contexts, fit whitening and codebooks, and build the
    /// semantic-ID registry.
    BuildTokenizer,
    /// Tokenize every train prefix with the built registry.
    Tokenize,
    /// Fit the count token model on augmented training examples.
    Fit,
    /// Beam-search evaluation against the held-out test items.
    Eval,
    /// Re-run the pipeline over a grid of gamma or tau values.
    Sweep {
        /// gamma | tau
        #[arg(long)]
        param: String,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Popular-rate curves, SID statistics, and per-SID sequence groups.
    Analyze,
}

fn apply_overrides(
    mut cfg: PipelineConfig,
    o: &ConfigOverrides,
) -> Result<PipelineConfig, AppError> {
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = &o.mode {
        cfg.mode = v.parse()?;
    }
    if let Some(v) = o.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = o.tau {
        cfg.tau = v;
    }
    if let Some(v) = o.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = o.beam {
        cfg.beam_width = v;
    }
    if let Some(v) = o.max_seq_len {
        cfg.max_seq_len = v;
    }
    if let Some(v) = o.min_interactions {
        cfg.min_interactions = v;
    }
    if let Some(v) = o.context_decay {
        cfg.context_decay = v;
    }
    if let Some(v) = &o.codebook_sizes {
        cfg.codebook_sizes = v.clone();
    }
    if let Some(v) = o.conflict_alphabet {
        cfg.conflict_alphabet = v;
    }
    if o.digits.is_some() {
        cfg.digits = o.digits;
    }
    if let Some(v) = o.smoothing {
        cfg.smoothing = v;
    }
    if let Some(v) = o.signature_items {
        cfg.signature_items = v;
    }
    if let Some(v) = o.train_epochs {
        cfg.train_epochs = v;
    }
    if let Some(v) = &o.augment_distribution {
        use pctx::config::ReplacementDistribution::*;
        cfg.augment_distribution = match v.as_str() {
            "uniform-others" => UniformOthers,
            "weighted-others" => WeightedOthers,
            "uniform-all" => UniformAll,
            other => {
                return Err(AppError::Pctx(pctx::Error::Config(format!(
                    "augment-distribution must be uniform-others|weighted-others|uniform-all, got '{other}'"
                ))))
            }
        };
    }
    if let Some(v) = o.alloc_groups {
        cfg.allocation.groups = v;
    }
    if let Some(v) = o.alloc_gamma_shape {
        cfg.allocation.gamma_shape = v;
    }
    if let Some(v) = o.alloc_c_start {
        cfg.allocation.c_start = v;
    }
    if let Some(v) = o.alloc_delta {
        cfg.allocation.delta = v;
    }
    Ok(cfg.validate()?)
}

fn run(cli: Cli) -> Result<(), AppError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Pctx(pctx::Error::Config(format!("thread pool: {e}"))))?;
    }

    let base = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AppError::Pctx(pctx::Error::io(path.display().to_string(), e)))?;
            PipelineConfig::from_toml(&text)?
        }
        None => PipelineConfig::default(),
    };
    let cfg = apply_overrides(base, &cli.overrides)?;
    let ws = Workspace::new(cli.out, cfg)?;

    match cli.command {
        Command::Ingest {
            interactions,
            features,
            contexts,
        } => stages::ingest(&ws, &interactions, features.as_deref(), contexts.as_deref()),
        Command::Synth {
            users,
            items,
            intents,
        } => stages::synth(&ws, users, items, intents),
        Command::BuildTokenizer => stages::build_tokenizer(&ws),
        Command::Tokenize => stages::tokenize(&ws),
        Command::Fit => stages::fit(&ws),
        Command::Eval => stages::eval(&ws),
        Command::Sweep { param, values } => stages::sweep(&ws, &param, &values),
        Command::Analyze => stages::analyze(&ws),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("PCTX_LOG")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
