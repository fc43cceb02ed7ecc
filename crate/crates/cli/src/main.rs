//! `projcc` command-line tool.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 data error,
//! 4 numeric failure.

mod commands;
mod config;
mod error;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{read_config_file, Settings, ENV_PREFIX};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "projcc",
    version,
    about = "Illuminant estimation with projective bias correction"
)]
struct Cli {
    /// TOML file of settings (also ILLUM_CONFIG).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Print every setting with its value and origin, then exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Option<Command>,
}

/// Setting overrides; each also reads `ILLUM_<NAME>` from the environment.
#[derive(Debug, Args)]
#[command(next_help_heading = "Settings")]
struct Overrides {
    /// APAP weight fall-off scale in degrees [default: 3.0]
    #[arg(long, global = true, value_name = "DEG")]
    sigma_w: Option<String>,
    /// APAP weight floor in (0, 1] [default: 0.0625]
    #[arg(long, global = true, value_name = "FLOOR")]
    gamma: Option<String>,
    /// LUT nodes per chromaticity axis [default: 16]
    #[arg(long, global = true, value_name = "L")]
    lut_size: Option<String>,
    /// Shades of Gray Minkowski order [default: 4]
    #[arg(long, global = true, value_name = "P")]
    sog_p: Option<String>,
    /// Gray Edge Minkowski order [default: 6]
    #[arg(long, global = true, value_name = "P")]
    ge_p: Option<String>,
    /// Gray Edge Gaussian sigma [default: 2]
    #[arg(long, global = true, value_name = "PIXELS")]
    ge_sigma: Option<String>,
    /// PCA bright/dark selection fraction [default: 0.035]
    #[arg(long, global = true, value_name = "FRACTION")]
    pca_percent: Option<String>,
    /// Working image size [default: 384x256]
    #[arg(long, global = true, value_name = "WxH")]
    downsample: Option<String>,
    /// ALS stopping threshold on the scale change [default: 1e-8]
    #[arg(long, global = true, value_name = "TOL")]
    als_threshold: Option<String>,
    /// ALS iteration cap [default: 100]
    #[arg(long, global = true, value_name = "N")]
    als_max_iters: Option<String>,
    /// Objective-checked ALS extrapolation [default: true]
    #[arg(long, global = true, value_name = "BOOL")]
    als_extrapolate: Option<String>,
    /// Gauss-Newton polish after ALS [default: true]
    #[arg(long, global = true, value_name = "BOOL")]
    als_refine: Option<String>,
    /// Cross-validation folds per camera [default: 3]
    #[arg(long, global = true, value_name = "K")]
    folds: Option<String>,
    /// Worker threads; 0 uses one per core [default: 0]
    #[arg(long, global = true, value_name = "N")]
    threads: Option<String>,
}

impl Overrides {
    fn to_map(&self) -> BTreeMap<&'static str, String> {
        [
            ("sigma_w", &self.sigma_w),
            ("gamma", &self.gamma),
            ("lut_size", &self.lut_size),
            ("sog_p", &self.sog_p),
            ("ge_p", &self.ge_p),
            ("ge_sigma", &self.ge_sigma),
            ("pca_percent", &self.pca_percent),
            ("downsample", &self.downsample),
            ("als_threshold", &self.als_threshold),
            ("als_max_iters", &self.als_max_iters),
            ("als_extrapolate", &self.als_extrapolate),
            ("als_refine", &self.als_refine),
            ("folds", &self.folds),
            ("threads", &self.threads),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
        .collect()
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a correction on a dataset and write the model file.
    Train(commands::TrainArgs),
    /// Correct one estimate or one image.
    Correct(commands::CorrectArgs),
    /// Cross-validated evaluation report.
    Eval(commands::EvalArgs),
    /// Generate a synthetic dataset from a spec file.
    Synth(commands::SynthArgs),
    /// Dump the header and node matrices of a LUT file.
    LutInspect(commands::LutInspectArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os(format!("{ENV_PREFIX}CONFIG")).map(PathBuf::from));
    let file = match &config_path {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    let settings = Settings::resolve(&cli.overrides.to_map(), |k| std::env::var(k).ok(), &file)?;
    if settings.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(settings.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    if cli.print_config {
        print!("{}", settings.describe());
        return Ok(());
    }
    match cli.command {
        Some(Command::Train(a)) => commands::train(&a, &settings),
        Some(Command::Correct(a)) => commands::correct(&a, &settings),
        Some(Command::Eval(a)) => commands::eval(&a, &settings),
        Some(Command::Synth(a)) => commands::synth(&a),
        Some(Command::LutInspect(a)) => commands::lut_inspect(&a),
        None => Err(CliError::Config("no subcommand given (see --help)".into())),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("projcc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
