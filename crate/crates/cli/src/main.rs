//! `wklm`: build word-knowledge graphs, pretrain, evaluate relation
//! completion, probe, and inspect single graphs.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numeric failure during
//! training, 4 checkpoint that does not fit its vocabulary or config.

mod commands;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Fallback for `--data-dir`.
pub const DATA_DIR_ENV: &str = "WKLM_DATA_DIR";

#[derive(Parser, Debug)]
#[command(name = "wklm", version, about = "Word-knowledge graph language model toolkit")]
struct Cli {
    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the training graphs of a corpus and report statistics.
    BuildGraphs(BuildArgs),
    /// Pretrain a model with the masked node objective.
    Pretrain(PretrainArgs),
    /// Rank relations for completion queries and report MR, MRR and HITS@k.
    EvalCompletion(EvalArgs),
    /// Cloze probing: precision@1 of the word head at a `[MASK]` token.
    Probe(ProbeArgs),
    /// Print the graph built for one sentence.
    InspectGraph(InspectArgs),
    /// Write a synthetic corpus, knowledge graph and alias table.
    Synth(SynthArgs),
    /// Hold out completion queries and write the remaining training data.
    Split(SplitArgs),
}

/// Input files. Each defaults to `corpus.txt`, `triples.tsv` or
/// `aliases.tsv` inside the data directory.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Directory with corpus.txt, triples.tsv and aliases.tsv [env: WKLM_DATA_DIR]
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// One sentence per line.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// head<TAB>relation<TAB>tail per line.
    #[arg(long)]
    pub triples: Option<PathBuf>,
    /// surface<TAB>entity per line.
    #[arg(long)]
    pub aliases: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for graphs.wkg, stats.txt and the vocabulary files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Cap on sampled facts per anchor.
    #[arg(long, default_value_t = 15)]
    pub max_neighbors: usize,
    #[arg(long, default_value_t = 128)]
    pub max_tokens: usize,
    /// Sampling epoch; graphs match what training builds in that epoch.
    #[arg(long, default_value_t = 0)]
    pub epoch: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `key = value` training config; unspecified keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overrides the config's seed (default 42).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's graph-building worker count.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides the config's step cap.
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Overrides the config's epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Continue from this checkpoint directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

/// Where a trained model lives.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Checkpoint directory (or its model.ckpt).
    #[arg(long)]
    pub model: PathBuf,
    /// Entity table; defaults to entities.bin beside the model.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Directory with the run's vocabulary files; defaults to the model's
    /// directory or its parent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// sentence<TAB>head<TAB>relation<TAB>tail<TAB>setting[<TAB>rel:tail,...]
    #[arg(long)]
    pub queries: PathBuf,
    /// Per-query ranks as CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 15)]
    pub max_neighbors: usize,
    #[arg(long, default_value_t = 128)]
    pub max_tokens: usize,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// sentence-with-[MASK]<TAB>answer per line.
    #[arg(long)]
    pub probes: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 15)]
    pub max_neighbors: usize,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Index of a corpus sentence (0-based, blank lines skipped).
    #[arg(long, conflicts_with = "text", required_unless_present = "text")]
    pub sentence: Option<usize>,
    /// A sentence to link and build instead.
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 15)]
    pub max_neighbors: usize,
    #[arg(long, default_value_t = 0)]
    pub epoch: u64,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Receives train/ (corpus, triples, aliases), transductive.tsv and
    /// inductive.tsv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub transductive_facts: usize,
    #[arg(long, default_value_t = 25)]
    pub inductive_entities: usize,
}

/// A failed command and its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numeric(String),
    Mismatch(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Mismatch(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numeric(m) | Failure::Mismatch(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::BuildGraphs(a) => commands::build_graphs(&a),
        Command::Pretrain(a) => commands::pretrain(&a),
        Command::EvalCompletion(a) => commands::eval_completion(&a),
        Command::Probe(a) => commands::probe(&a),
        Command::InspectGraph(a) => commands::inspect_graph(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Split(a) => commands::split(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
