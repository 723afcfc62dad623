//! `stomaforge`: validate, split, tile, pseudo-label, merge, stitch, evaluate
//! and summarize stomatal segmentation datasets.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stomaforge::tiler::EmptyPatchPolicy;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "stomaforge", version, about)]
pub struct Cli {
    /// JSON pipeline config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for per-image parallelism.
    #[arg(long, global = true, env = "STOMAFORGE_JOBS")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a COCO dataset against the structural and geometric rules.
    Validate(ValidateArgs),
    /// Partition images into train/val/test datasets.
    Split(SplitArgs),
    /// Cut frames into overlapping patches and write the manifest.
    Tile(TileArgs),
    /// Threshold predictions and build the pseudo-labelled patch dataset.
    PseudoFilter(PseudoFilterArgs),
    /// Append a pseudo-labelled dataset to a human-annotated one.
    Merge(MergeArgs),
    /// Reproject patch predictions onto their frames and deduplicate.
    Stitch(StitchArgs),
    /// Pixel mIoU / mAcc of predictions against ground truth.
    EvalSemantic(EvalSemanticArgs),
    /// Mask AP / AP50 of predictions against ground truth.
    EvalInstance(EvalInstanceArgs),
    /// Instance counts and mask-coverage distributions per class.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Write the full issue list as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Reject category names outside the three stomatal classes.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Directory receiving train.json, val.json and test.json.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON split spec: explicit lists or `{ratios, seed}`.
    #[arg(long, conflicts_with_all = ["ratios", "seed"], required_unless_present = "ratios")]
    pub spec: Option<PathBuf>,
    /// Train,val,test proportions.
    #[arg(long, value_delimiter = ',', requires = "seed")]
    pub ratios: Option<Vec<f64>>,
    #[arg(long, requires = "ratios")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TileArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Directory receiving patches.json and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<EmptyPatchPolicy>,
    #[arg(long)]
    pub patch: Option<u32>,
    #[arg(long)]
    pub stride: Option<u32>,
}

fn parse_mode(s: &str) -> Result<EmptyPatchPolicy, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("expected drop-empty or keep-empty, got {s:?}"))
}

#[derive(Debug, Args)]
pub struct PseudoFilterArgs {
    /// Results-array JSON of model predictions on the patches.
    #[arg(long)]
    pub preds: PathBuf,
    /// Unlabelled patch dataset the predictions refer to.
    #[arg(long)]
    pub patches: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `default` or a JSON file mapping category name to threshold.
    #[arg(long)]
    pub thresholds: Option<String>,
    /// Per-class override, `NAME=VALUE`; repeatable.
    #[arg(long = "threshold", value_name = "NAME=VALUE")]
    pub threshold: Vec<String>,
    /// Also write the rejected predictions.
    #[arg(long)]
    pub dropped: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long)]
    pub human: PathBuf,
    #[arg(long)]
    pub pseudo: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dedup_iou: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalSemanticArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// Results array, or a COCO dataset whose annotations are the prediction.
    #[arg(long)]
    pub preds: PathBuf,
    /// Results-array entries below this score are not painted.
    #[arg(long, default_value_t = 0.5)]
    pub min_score: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalInstanceArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Require every file name to follow the sample grammar.
    #[arg(long)]
    pub strict: bool,
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(CliError::Usage(e.render().to_string().trim_end().to_string())),
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            return fail(CliError::Usage("--jobs must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(CliError::Processing(e.to_string()));
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
