//! `voxelseg` — command-line pipeline over segmentation volumes.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 for usage,
//! configuration, or input errors (including unreadable or malformed
//! files). Clap itself exits 2 on bad invocations and 0 for `--help`.

mod commands;
mod config;
mod pairing;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use voxelseg::exec;

use config::FileConfig;

#[derive(Parser)]
#[command(
    name = "voxelseg",
    version,
    about = "Pipeline tools for 3D tumor segmentation volumes",
    long_about = "Reads and writes NIfTI-1 volumes (.nii / .nii.gz). Labels are \
                  0 background, 1 necrotic core, 2 edema, 3 enhancing tumor; \
                  probability files carry three channels in (ET, TC, WT) order \
                  along the fourth axis."
)]
struct Cli {
    /// TOML manifest with defaults for any flag; flags given on the
    /// command line override the manifest.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for data-parallel stages and per-subject
    /// concurrency (>= 1; default: one per CPU).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Deterministic reductions: identical inputs produce bit-identical
    /// outputs at any --jobs value (default true).
    #[arg(long, global = true, value_name = "BOOL")]
    deterministic: Option<bool>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply an intensity preprocessing plan and print per-volume stats
    Preprocess(PreprocessArgs),
    /// Decode 3-channel region probabilities into a label volume
    Threshold(ThresholdArgs),
    /// Remove dust components and fill enclosed holes in a prediction
    Postprocess(PostprocessArgs),
    /// Drop sub-threshold lesions from a ground-truth label volume
    CleanGt(CleanGtArgs),
    /// Score region probabilities against ground-truth labels
    Loss(LossArgs),
    /// Lesion-wise and whole-volume evaluation over paired directories
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Input intensity volume, or a directory of volumes
    input: Option<PathBuf>,
    /// Output path; a directory when the input is a directory
    output: Option<PathBuf>,
    /// Comma-separated steps: "zscore", "rescale[:LOW:HIGH]",
    /// "histmatch:REF.nii[:QUANTILES]"; "" copies the input through
    #[arg(long, value_name = "STEPS")]
    plan: Option<String>,
}

#[derive(Args)]
struct ThresholdArgs {
    /// 4-D probability volume with channels (ET, TC, WT)
    input: Option<PathBuf>,
    /// Output label volume
    output: Option<PathBuf>,
    /// Whole-tumor acceptance threshold, in (0, 1)
    #[arg(long, value_name = "P")]
    wt: Option<f64>,
    /// Tumor-core acceptance threshold, in (0, 1)
    #[arg(long, value_name = "P")]
    tc: Option<f64>,
    /// Enhancing-tumor acceptance threshold, in (0, 1)
    #[arg(long, value_name = "P")]
    et: Option<f64>,
}

#[derive(Args)]
struct PostprocessArgs {
    /// Input label volume
    input: Option<PathBuf>,
    /// Output label volume
    output: Option<PathBuf>,
    /// Remove region components with at most this many voxels
    #[arg(long, value_name = "VOXELS")]
    dust_max: Option<usize>,
    /// Foreground component connectivity: 6, 18, or 26
    #[arg(long, value_name = "N")]
    fg_connectivity: Option<u32>,
    /// Background connectivity for hole detection: 6, 18, or 26
    #[arg(long, value_name = "N")]
    hole_connectivity: Option<u32>,
}

#[derive(Args)]
struct CleanGtArgs {
    /// Input ground-truth label volume
    input: Option<PathBuf>,
    /// Output label volume
    output: Option<PathBuf>,
    /// Drop lesions whose undilated size is at most this many voxels
    #[arg(long, value_name = "VOXELS")]
    dust_max: Option<usize>,
    /// Dilation iterations when grouping components into lesions
    #[arg(long, value_name = "N")]
    dilation_iters: Option<usize>,
}

#[derive(Args)]
struct LossArgs {
    /// 4-D probability volume with channels (ET, TC, WT)
    #[arg(long, value_name = "FILE")]
    pred: Option<PathBuf>,
    /// Ground-truth label volume
    #[arg(long, value_name = "FILE")]
    gt: Option<PathBuf>,
    /// Preset name (combo1 | combo2 | combo3) or "kind:weight,..."
    /// over mse, ce, dice, focal, edge
    #[arg(long, value_name = "SPEC")]
    spec: Option<String>,
    /// Focusing exponent for the focal term (finite, >= 0)
    #[arg(long, value_name = "GAMMA")]
    focal_gamma: Option<f64>,
    /// Write per-channel gradients to <PREFIX>-et.nii.gz,
    /// <PREFIX>-tc.nii.gz and <PREFIX>-wt.nii.gz
    #[arg(long, value_name = "PREFIX")]
    grad_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of predicted label volumes
    #[arg(long, value_name = "DIR")]
    pred: Option<PathBuf>,
    /// Directory of ground-truth label volumes
    #[arg(long, value_name = "DIR")]
    gt: Option<PathBuf>,
    /// Output CSV path (per-subject rows plus a cohort_mean row)
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Optional JSON report mirroring the CSV content
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
    /// Dilation iterations when grouping components into lesions
    #[arg(long, value_name = "N")]
    dilation_iters: Option<usize>,
    /// Ignore ground-truth lesions at or below this size
    #[arg(long, value_name = "VOXELS")]
    gt_min_size: Option<usize>,
    /// HD95 charged to each false-positive lesion, in mm
    #[arg(long, value_name = "MM")]
    fp_penalty: Option<f64>,
    /// HD95 charged to each false-negative lesion, in mm
    #[arg(long, value_name = "MM")]
    fn_penalty: Option<f64>,
}

fn run(cli: Cli) -> voxelseg::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let jobs = file.jobs(cli.jobs)?;
    exec::set_deterministic(file.deterministic(cli.deterministic));

    #[cfg(feature = "parallel")]
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| voxelseg::Error::Config(format!("thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    if jobs.unwrap_or(1) > 1 {
        eprintln!("warning: built without parallel support; running on one thread");
    }

    match cli.command {
        Command::Preprocess(a) => commands::preprocess(&file, a),
        Command::Threshold(a) => commands::threshold(&file, a),
        Command::Postprocess(a) => commands::postprocess(&file, a),
        Command::CleanGt(a) => commands::clean_gt(&file, a),
        Command::Loss(a) => commands::loss(&file, a),
        Command::Evaluate(a) => commands::evaluate(&file, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
