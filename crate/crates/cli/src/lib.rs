//! `sdc` command-line front end.
//!
//! Every subcommand prints exactly one JSON document on stdout; logs go to
//! stderr. Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numeric.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sdc_core::Error;

mod commands;
mod config;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sdc", version, about = "Binary hash codes with similarity distribution calibration")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Master seed; overrides `seed` from --config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat JSON object of configuration keys. Flags take precedence.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Primary output path of the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a Gaussian-cluster feature file.
    GenData(GenDataArgs),
    /// Train a hash model on a feature file.
    Train(TrainArgs),
    /// Encode features into a packed code file.
    Encode(EncodeArgs),
    /// Rank a gallery code file for each query code.
    Retrieve(RetrieveArgs),
    /// mAP@k and precision/recall over Hamming radii.
    Eval(EvalArgs),
    /// Positive/negative similarity histograms and their intersection.
    Analyze(AnalyzeArgs),
    /// Fit an ITQ or LSH baseline.
    Baseline(BaselineArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Points per cluster.
    #[arg(long)]
    pub per: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub center_scale: Option<f64>,
    #[arg(long)]
    pub within_std: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Sdc,
    Preservation,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub bits: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda_q: Option<f64>,
    #[arg(long)]
    pub lambda_cl: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    /// Exponent of the preservation loss (1 or 2).
    #[arg(long)]
    pub p: Option<u8>,
    #[arg(long)]
    pub no_shuffle: bool,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Hash (SDCM) or ITQ (SDCI) checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub gallery: PathBuf,
    /// Depth of the ranking; 100 unless set here or by `k` in --config.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizationArg {
    /// Divide by min(total relevant, k).
    MinRelevant,
    /// Divide by the relevant items retrieved in the top k.
    RetrievedRelevant,
}

/// Codes come from `--codes`, or from `--model` applied to the features.
#[derive(Debug, Args)]
pub struct CodeSource {
    #[arg(long, conflicts_with = "model")]
    pub codes: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: CodeSource,
    /// Labelled gallery features.
    #[arg(long)]
    pub features: PathBuf,
    /// Labelled query features; without them the gallery queries itself,
    /// excluding each item's self-match.
    #[arg(long)]
    pub query_features: Option<PathBuf>,
    #[arg(long, requires = "query_features")]
    pub query_codes: Option<PathBuf>,
    /// Depth of the ranking; 100 unless set here or by `k` in --config.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value_t = NormalizationArg::MinRelevant)]
    pub normalization: NormalizationArg,
    /// Write the precision/recall curve as CSV.
    #[arg(long)]
    pub pr_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub source: CodeSource,
    /// Labelled features.
    #[arg(long)]
    pub features: PathBuf,
    /// Use cosine similarities of the raw features instead of codes.
    #[arg(long, conflicts_with_all = ["codes", "model"])]
    pub raw: bool,
    #[arg(long)]
    pub n_pos: Option<usize>,
    #[arg(long)]
    pub n_neg: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    Itq,
    Lsh,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: BaselineMethod,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub bits: Option<usize>,
    /// ITQ rounds.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Continue with a warning when the covariance is rank-deficient.
    #[arg(long)]
    pub allow_rank_deficient: bool,
}

/// Failure of a subcommand, already mapped to an exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            _ if e.is_numeric() => EXIT_NUMERIC,
            Error::Config(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// writes its JSON document to `stdout`.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    eprint!("{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match commands::dispatch(&cli).and_then(|doc| {
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::from(Error::from(e)))?;
        writeln!(stdout, "{text}").map_err(|e| Failure {
            code: EXIT_DATA,
            message: format!("writing stdout: {e}"),
        })
    }) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock())
}
