//! Command-line frontend: argument parsing, file formats and the pipeline
//! steps built on `roage_core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use roage_core::Campaign;

use crate::commands::Context;
use crate::config::RunConfig;
pub use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "roage", version, about = "Ageing analysis of FPGA ring-oscillator fleets")]
pub struct Cli {
    /// JSON run configuration; defaults apply to every absent field.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for artifacts; created when missing.
    #[arg(long, global = true, env = "ROAGE_OUT_DIR", default_value = "roage-out")]
    pub out: PathBuf,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured campaign kind.
    #[arg(long, global = true, value_parser = parse_campaign)]
    pub campaign: Option<Campaign>,
    /// Measurement CSV to analyse instead of `<out>/measurements.csv`.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Covariate CSV to use instead of `<out>/covariates.csv`.
    #[arg(long, global = true)]
    pub covariates: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic fleet.
    Simulate,
    /// Extract per-oscillator trends (continuous campaigns).
    Trend,
    /// Relative frequency shift per oscillator.
    Shift,
    /// Flag devices by modified Z-score.
    Outliers,
    /// Interpolate median shifts over the fabric.
    Map,
    /// Mann-Kendall trend test and linear slopes.
    Trendtest,
    /// Forecast every trend.
    Forecast,
    /// Rolling-origin evaluation of a forecaster.
    Backtest,
    /// Collect headline numbers of the steps already run.
    Report,
    /// Print the JSON Schema of the configuration file.
    Schema,
}

fn parse_campaign(s: &str) -> Result<Campaign, String> {
    match s {
        "continuous" => Ok(Campaign::Continuous),
        "shutdown" => Ok(Campaign::Shutdown),
        _ => Err(format!("expected `continuous` or `shutdown`, got `{s}`")),
    }
}

/// Config file merged with the command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(c) = cli.campaign {
        cfg.campaign = c;
    }
    if cli.input.is_some() {
        cfg.input.measurements = cli.input.clone();
    }
    if cli.covariates.is_some() {
        cfg.input.covariates = cli.covariates.clone();
    }
    Ok(cfg)
}

/// Runs one parsed invocation; the returned string is the summary line.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let cfg = resolve_config(cli)?;
    if cli.command == Command::Schema {
        return serde_json::to_string_pretty(&config::schema()).map_err(|e| CliError::Data(e.to_string()));
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // Only the first call in a process can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
    let warn = |w: &str| eprintln!("warning: {w}");
    let ctx = Context {
        config: &cfg,
        out: cli.out.clone(),
        warn: &warn,
    };
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Trend => commands::trend(&ctx),
        Command::Shift => commands::shift(&ctx),
        Command::Outliers => commands::outliers(&ctx),
        Command::Map => commands::map(&ctx),
        Command::Trendtest => commands::trendtest(&ctx),
        Command::Forecast => commands::forecast(&ctx),
        Command::Backtest => commands::backtest(&ctx),
        Command::Report => commands::report(&ctx),
        Command::Schema => unreachable!(),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(line) => {
            // A closed pipe on stdout is not a failure of the command.
            let _ = writeln!(std::io::stdout(), "{line}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
