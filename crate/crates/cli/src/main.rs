use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vekit::VeError;

mod commands;
mod config;

/// Visual-entailment toolkit: dataset construction, auditing, statistics,
/// training, evaluation and attention export.
#[derive(Debug, Parser)]
#[command(name = "ve-kit", version)]
struct Cli {
    /// key=value file supplying defaults for any flag; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build train/val/test JSONL partitions from SNLI files and an image split.
    BuildDataset(BuildArgs),
    /// Check that no image is shared between partitions; exit 1 if one is.
    Audit(AuditArgs),
    /// Per-partition sizes and hypothesis-length statistics.
    Stats(StatsArgs),
    /// Train one architecture and keep the best-balanced checkpoint.
    Train(TrainArgs),
    /// Accuracy of a checkpoint on one partition.
    Eval(EvalArgs),
    /// Export the text-image attention of an EVE checkpoint.
    Visualize(VisualizeArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// SNLI JSONL input; repeat for several files.
    #[arg(long, value_name = "FILE")]
    pub snli: Vec<String>,
    /// JSON object with train/val/test image id lists.
    #[arg(long, value_name = "FILE")]
    pub split: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<String>,
    /// abort | continue
    #[arg(long)]
    pub on_error: Option<String>,
    /// drop | abort
    #[arg(long)]
    pub missing_image: Option<String>,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<String>,
    /// Also write the JSON report here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<String>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<String>,
    /// json | text
    #[arg(long)]
    pub format: Option<String>,
    /// Write the length histogram as CSV.
    #[arg(long, value_name = "FILE")]
    pub histogram: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<String>,
    /// hypothesis-only | te | rn | top-down | bottom-up | eve-image | eve-roi
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<String>,
    /// Directory of `<image_id>.vef` files.
    #[arg(long, value_name = "DIR")]
    pub features: Option<String>,
    /// JSON object mapping image id to caption (te only).
    #[arg(long, value_name = "FILE")]
    pub captions: Option<String>,
    /// Whitespace-separated word vectors, one word per line.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<String>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub head_hidden: Option<usize>,
    #[arg(long)]
    pub rn_hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub eval_batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr_factor: Option<f64>,
    #[arg(long)]
    pub lr_floor: Option<f64>,
    /// Overrides VEKIT_SEED and the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<String>,
    /// train | val | test
    #[arg(long)]
    pub partition: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub features: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub captions: Option<String>,
    /// Defaults to vocab.txt next to the checkpoint.
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<String>,
    /// Write per-instance predictions as JSONL.
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<String>,
    #[arg(long)]
    pub eval_batch_size: Option<usize>,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<String>,
    /// A single `.vef` file; otherwise looked up under --features.
    #[arg(long, value_name = "FILE")]
    pub feature_file: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub features: Option<String>,
    /// Hypothesis text; alternatively --dataset with --pair-id.
    #[arg(long)]
    pub hypothesis: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<String>,
    #[arg(long)]
    pub pair_id: Option<String>,
    /// JSON output path; grid features also get a `.pgm` next to it.
    #[arg(long, value_name = "FILE")]
    pub out: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] VeError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(VeError::Config(_)) => 2,
            CliError::Validation(_) | CliError::Core(_) => 1,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => config::read_config(path)?,
        None => Default::default(),
    };
    let mut r = config::Resolver::new(file, std::env::var(config::SEED_ENV).ok());
    match cli.command {
        Command::BuildDataset(a) => commands::build_dataset(a, &mut r),
        Command::Audit(a) => commands::audit(a, &mut r),
        Command::Stats(a) => commands::stats(a, &mut r),
        Command::Train(a) => commands::train(a, &mut r),
        Command::Eval(a) => commands::eval(a, &mut r),
        Command::Visualize(a) => commands::visualize(a, &mut r),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ve-kit: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("Run 've-kit --help' for usage.");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
