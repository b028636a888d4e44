//! `rawgnss` command-line front end.
//!
//! Every command prints a one-line JSON summary on stdout. Failures print a
//! JSON error object on stderr and exit with 1 (usage), 2 (bad input or
//! config) or 3 (processing failure, including missing ephemerides).

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::{CliError, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "rawgnss", version, about = "Raw GNSS positioning and pose-accuracy tools")]
pub struct Cli {
    /// Run configuration file (TOML); flags take precedence over it
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download a daily broadcast navigation file into the cache
    FetchEph(FetchEphArgs),
    /// Compute position fixes from a raw observation CSV
    Solve(SolveArgs),
    /// Grid altitude consistency report over repeated drives
    ValidateGrid(ValidateGridArgs),
    /// Compare a candidate grid report against a baseline
    Compare(CompareArgs),
    /// Orientation error estimate from reprojection residuals
    OrientationRmse(OrientationRmseArgs),
    /// Correct poses of several drives against a shared feature map
    Refine(RefineArgs),
    /// Generate a synthetic scene
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct FetchEphArgs {
    /// UTC day, YYYY-MM-DD
    #[arg(long, value_name = "DATE")]
    pub date: chrono::NaiveDate,
    /// Cache directory [env: RAWGNSS_CACHE_DIR]
    #[arg(long, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Archive base URL [env: RAWGNSS_NAV_BASE_URL]
    #[arg(long, value_name = "URL")]
    pub base_url: Option<String>,
    /// Also fetch the GLONASS navigation file
    #[arg(long)]
    pub glonass: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Raw observation CSV
    #[arg(long, value_name = "CSV")]
    pub raw: PathBuf,
    /// Navigation files (RINEX, optionally gzip or .Z); fetched for the log's day when omitted
    #[arg(long, value_name = "RINEX", num_args = 1..)]
    pub nav: Vec<PathBuf>,
    /// Solver
    #[arg(long, value_name = "MODE", default_value = "wls", value_parser = ["wls", "kf"])]
    pub mode: String,
    /// Output fix CSV
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
    /// Output run report (JSON); defaults to the fix path with a .report.json suffix
    #[arg(long, value_name = "JSON")]
    pub report: Option<PathBuf>,
    /// Elevation mask [deg]
    #[arg(long, value_name = "DEG")]
    pub elevation_mask: Option<f64>,
    /// C/N0 floor [dB-Hz]
    #[arg(long, value_name = "DBHZ")]
    pub cn0_floor: Option<f64>,
    /// Cache directory for fetched navigation files [env: RAWGNSS_CACHE_DIR]
    #[arg(long, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Archive base URL [env: RAWGNSS_NAV_BASE_URL]
    #[arg(long, value_name = "URL")]
    pub base_url: Option<String>,
}

#[derive(Debug, Args)]
pub struct ValidateGridArgs {
    /// Fix CSVs, one per drive
    #[arg(long, value_name = "CSV", num_args = 1.., required = true)]
    pub fixes: Vec<PathBuf>,
    /// Cell size [m]
    #[arg(long, value_name = "M")]
    pub cell: Option<f64>,
    /// Grid origin: `auto` (centroid of all fixes) or `lat,lon[,height]`
    #[arg(long, value_name = "ORIGIN", default_value = "auto")]
    pub origin: String,
    /// Minimum fixes per qualified cell
    #[arg(long, value_name = "N")]
    pub min_passes: Option<usize>,
    /// Minimum distinct drives per qualified cell
    #[arg(long, value_name = "N")]
    pub min_drives: Option<usize>,
    /// Output report (JSON)
    #[arg(long, value_name = "JSON")]
    pub out: PathBuf,
    /// Output histogram CSV; defaults to the report path with a .histogram.csv suffix
    #[arg(long, value_name = "CSV")]
    pub histogram: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Candidate grid report (JSON)
    #[arg(long, value_name = "JSON")]
    pub candidate: PathBuf,
    /// Baseline grid report (JSON)
    #[arg(long, value_name = "JSON")]
    pub baseline: PathBuf,
    /// Output comparison (JSON)
    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,
    /// Output overlaid histogram CSV
    #[arg(long, value_name = "CSV")]
    pub overlay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OrientationRmseArgs {
    /// Pose CSV; frame ids in the feature file index its rows
    #[arg(long, value_name = "CSV")]
    pub poses: PathBuf,
    /// Feature file with world points
    #[arg(long, value_name = "CSV")]
    pub features: PathBuf,
    /// Output report (JSON)
    #[arg(long, value_name = "JSON")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Drive directories, each holding poses.csv and tracks.csv
    #[arg(long, value_name = "DIR", num_args = 1.., required = true)]
    pub drives: Vec<PathBuf>,
    /// Iteration limit
    #[arg(long, value_name = "N")]
    pub max_iters: Option<usize>,
    /// Output directory: drive_NN/poses.csv, trace.csv and report.json
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene file (TOML); built-in defaults when omitted
    #[arg(long, value_name = "TOML")]
    pub scene: Option<PathBuf>,
    /// Overrides the scene seed
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            if code == EXIT_OK {
                let _ = e.print();
            } else {
                eprintln!("{}", CliError::Usage(e.render().to_string().trim_end().to_string()).to_json());
            }
            return ExitCode::from(code as u8);
        }
    };
    match commands::run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
