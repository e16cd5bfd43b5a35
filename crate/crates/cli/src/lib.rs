//! `eyf` command-line front end.
//!
//! Every command writes its outputs plus a `manifest.json` into the `--out`
//! directory. A manifest records the arguments without the output directory,
//! so `eyf replay` can rerun it into another directory byte for byte.
//!
//! Exit codes: 0 success, 1 usage, 2 input parse, 3 numeric failure
//! (including a fit that did not converge; its outputs are still written).

mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use eyf_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "eyf",
    version,
    about = "Fit, sample and analyse two-branch income distributions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to income records (optionally with a rich-list tail)
    Fit(FitArgs),
    /// Tabulate pdf and ccdf on a log-spaced income grid
    Eval(EvalArgs),
    /// Draw incomes from a parameter file
    Sample(SampleArgs),
    /// Generate a survey sample plus the exact top-K of a population
    Synth(SynthArgs),
    /// Class metrics, early-warning and crisis flags for year series
    Analyze(AnalyzeArgs),
    /// Rerun a manifest into a new output directory
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CsvArgs {
    /// Income column: header name or 0-based index
    #[arg(long, default_value = "income")]
    pub column: String,
    /// Optional survey-weight column: header name or 0-based index
    #[arg(long)]
    pub weight_column: Option<String>,
    /// The file has no header row (columns must then be indices)
    #[arg(long)]
    pub no_header: bool,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Survey income records (CSV)
    #[arg(long)]
    pub input: PathBuf,
    /// Incomes of the K richest members of the population (CSV, `income` column)
    #[arg(long, requires = "population")]
    pub rich_list: Option<PathBuf>,
    /// Population size the rich list is ranked against
    #[arg(long)]
    pub population: Option<f64>,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    pub points_per_decade: u32,
    /// Fit T1 as a free parameter instead of tying it to m1
    #[arg(long)]
    pub no_constrain_t1: bool,
    /// Residual weights: `inverse-variance` or `uniform`
    #[arg(long, default_value = "inverse-variance")]
    pub weighting: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pub starts: u32,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_iterations: u32,
    /// Bootstrap replicates for parameter standard errors (0 disables)
    #[arg(long, default_value_t = 0)]
    pub bootstrap: u32,
    #[arg(long, default_value = "USD")]
    pub currency: String,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub min: f64,
    #[arg(long)]
    pub max: f64,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub params: PathBuf,
    /// Survey size
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long)]
    pub population: u64,
    /// Size of the rich list (0 writes the survey only)
    #[arg(long, default_value_t = 0)]
    pub rich_k: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Series file(s): JSON arrays of {year, region, params}
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value_t = eyf_core::analysis::DEFAULT_WARNING_THRESHOLD)]
    pub threshold_warning: f64,
    #[arg(long, default_value_t = eyf_core::analysis::DEFAULT_CRISIS_TOLERANCE)]
    pub threshold_crisis: f64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Domain(_) => EXIT_USAGE,
            Error::Io { .. } | Error::Parse { .. } | Error::Json(_) | Error::Data(_) | Error::InvalidParams(_) => {
                EXIT_PARSE
            }
            Error::NotNormalizable(_)
            | Error::Quadrature { .. }
            | Error::Numeric(_)
            | Error::Degenerate(_)
            | Error::Bootstrap { .. } => EXIT_NUMERIC,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli.command, &argv) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
