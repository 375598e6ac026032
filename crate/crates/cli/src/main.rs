//! `bite`: build bi-typed text graphs, refine them, train and evaluate
//! node classifiers, and run the ablation grid.

mod bundle;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use bitype::train::{TrainError, Variant};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "bite",
    version,
    about = "Bi-typed text graph construction, refinement and training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tokenize a corpus, mine phrases, and write a dataset bundle.
    Prepare(PrepareArgs),
    /// Trim and add document/word edges by embedding similarity.
    Refine(RefineArgs),
    /// Train one variant and write its checkpoint and metrics.
    Train(TrainArgs),
    /// Evaluate a trained model directory on its split.
    Eval(EvalArgs),
    /// Train every (variant, seed) cell and write a results table.
    Ablation(AblationArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Config file of `section.key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus file, `doc_id<TAB>text` per line.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Citation edge list over corpus document ids.
    #[arg(long)]
    citations: Option<PathBuf>,
    /// Labels, `doc_id<TAB>label` per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output bundle directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use this phrase vocabulary (one `_`-joined phrase per line) instead of mining.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Longest mined n-gram.
    #[arg(long)]
    max_n: Option<usize>,
    /// Minimum phrase frequency.
    #[arg(long)]
    min_freq: Option<usize>,
    /// Keep only this many most frequent phrases.
    #[arg(long)]
    max_vocab: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input bundle (default: $BITE_DATA_DIR).
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Output bundle directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Which sub-network to refine: dd, ww or both.
    #[arg(long)]
    edge_type: Option<String>,
    /// Add non-edges with similarity above this.
    #[arg(long)]
    t_high: Option<f64>,
    /// Remove edges with similarity below this.
    #[arg(long)]
    t_low: Option<f64>,
    /// Cap on edges added per node.
    #[arg(long)]
    max_added_per_node: Option<usize>,
    /// Embedding file keyed by global node id (single edge type only).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Co-occurrence window for built-in word embeddings.
    #[arg(long)]
    window: Option<usize>,
    /// Dimension of built-in word embeddings.
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Hidden layer width.
    #[arg(long)]
    hidden: Option<usize>,
    /// Attention heads.
    #[arg(long)]
    heads: Option<usize>,
    /// Dropout rate on layer inputs.
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct TrainingArgs {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Seed for initialization, dropout and the split.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input bundle (default: $BITE_DATA_DIR).
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Refined bundle, used by variants r and ra.
    #[arg(long)]
    refined_bundle: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// gcn, b, r, a or ra.
    #[arg(long)]
    variant: Option<Variant>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `bite train`.
    #[arg(long)]
    model: PathBuf,
    /// Override the bundle recorded in model.cfg.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    refined_bundle: Option<PathBuf>,
    /// Output TSV (default: <model>/eval.tsv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    refined_bundle: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated variants (default: gcn,b,r,a,ra).
    #[arg(long)]
    variants: Option<String>,
    /// Comma-separated seeds (default: 0,1,2,3,4).
    #[arg(long)]
    seeds: Option<String>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    training: TrainingArgs,
}

const EXIT_DIVERGED: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::Refine(a) => commands::refine(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval(a),
        Command::Ablation(a) => commands::ablation(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<TrainError>() {
                Some(TrainError::Diverged { .. }) => ExitCode::from(EXIT_DIVERGED),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
