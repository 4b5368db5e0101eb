//! `camdot`: run, tune and cost CNN inference on the CAM simulator.

mod args;
mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use args::{HashSource, Invalid};

#[derive(Parser, Debug)]
#[command(name = "camdot", version, about = "CAM-based approximate dot-product CNN simulator")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Also render SVG plots of the emitted CSVs into this directory.
    #[arg(long, global = true, value_name = "DIR")]
    plot: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify a dataset and report accuracy and hardware cost.
    Run(RunArgs),
    /// Approximate vs exact dot-product error over random vector pairs.
    Dotbench(DotbenchArgs),
    /// Choose per-layer hash lengths on a calibration split.
    Tune(TuneArgs),
    /// Cost report from the schedule alone (no arithmetic).
    Cost(CostArgs),
}

#[derive(Args, Debug, Clone)]
struct HwArgs {
    /// CAM rows: 64, 128, 256 or 512.
    #[arg(long, default_value_t = 64)]
    rows: usize,

    /// Dataflow: `ws` (weight-stationary) or `as` (activation-stationary).
    #[arg(long, default_value = "as")]
    dataflow: String,

    /// Search cycles per CAM access.
    #[arg(long)]
    sense_window: Option<u32>,

    /// Quantize hamming distances into buckets of this width.
    #[arg(long)]
    distance_bucket: Option<u32>,

    /// Cost table TOML (overrides $DEEPCAM_COST_TABLE).
    #[arg(long, value_name = "PATH")]
    cost_table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    hw: HwArgs,
    /// `uniform:<k>`, `list:<k1>,<k2>,...` or `file:<tune result>`.
    #[arg(long, default_value = "uniform:1024")]
    hash: HashSource,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use at most this many samples.
    #[arg(long)]
    limit: Option<usize>,
    /// Cosine applied to the estimated angle: `piecewise` or `exact`.
    #[arg(long, default_value = "piecewise")]
    cosine: String,
    /// Replace approximate products with exact ones (same schedule).
    #[arg(long)]
    exact: bool,
    /// Per-layer cost report.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Accuracy and cost summary (TOML).
    #[arg(long, value_name = "PATH")]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DotbenchArgs {
    /// Hash lengths (>= 8).
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512,1024")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Length of the random vectors.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output (default: stdout).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    hw: HwArgs,
    /// Allowed accuracy drop, in percentage points.
    #[arg(long, default_value_t = 1.0)]
    tolerance: f64,
    /// Calibration samples, taken from the front of the dataset.
    #[arg(long, default_value_t = 500)]
    calib_size: usize,
    #[arg(long, value_delimiter = ',', default_value = "256,512,768,1024")]
    candidates: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tune result (TOML), usable as `run --hash file:<PATH>`.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Sensitivity table CSV.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Also report accuracy on the samples after the calibration split.
    #[arg(long)]
    evaluate: bool,
}

#[derive(Args, Debug)]
struct CostArgs {
    /// Model file; only its geometry is used.
    #[arg(long, conflicts_with = "conv", required_unless_present = "conv")]
    model: Option<PathBuf>,
    /// Single convolution instead of a model: `CxHxW:KxRxS[:stride[:pad]]`.
    #[arg(long)]
    conv: Option<String>,
    #[command(flatten)]
    hw: HwArgs,
    #[arg(long, default_value = "uniform:1024")]
    hash: HashSource,
    /// Number of inferences to cost.
    #[arg(long, default_value_t = 1)]
    images: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
}

/// Stable exit codes: 1 invalid input, 2 I/O, 3 internal.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<camdot_core::Error>() {
            return match e {
                _ if e.is_io() => 2,
                camdot_core::Error::ReportMismatch(_) => 3,
                _ => 1,
            };
        }
        if cause.is::<Invalid>() {
            return 1;
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: configuring {n} threads: {e}");
            return ExitCode::from(3);
        }
    }
    let plot = cli.plot.as_deref();
    let result = match cli.command {
        Command::Run(a) => commands::run(a, plot),
        Command::Dotbench(a) => commands::dotbench(a, plot),
        Command::Tune(a) => commands::tune(a, plot),
        Command::Cost(a) => commands::cost(a, plot),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
