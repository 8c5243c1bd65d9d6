//! `vasicek`: fit, summarize and extrapolate a two-maturity Vasicek model.
//!
//! Exit codes: 0 success, 1 diagnostics reject convergence, 2 bad input,
//! 3 sampler stall, 4 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use config::{parse_pair, Decomposition, RunConfig};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self { code: 2, message: msg.into() }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Self { code: 4, message: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<vasicek_core::Error> for CliError {
    fn from(e: vasicek_core::Error) -> Self {
        use vasicek_core::Error as E;
        let code = match e {
            E::Invalid(_) | E::Io(_) | E::Csv(_) => 2,
            E::Stall(_) => 3,
            E::Domain(_) | E::Infeasible(_) | E::Boundary(_) | E::NoConvergence(_) | E::Singular(_) => 4,
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "vasicek", version, about = "Vasicek term-structure estimation and long-maturity extrapolation")]
struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Rates in the data file are quoted in percent.
    #[arg(long, global = true, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    rates_in_percent: Option<bool>,
    #[arg(long, global = true, value_enum)]
    decomposition: Option<Decomposition>,
    /// Short and long maturity in years, e.g. `5,20`.
    #[arg(long, global = true, value_name = "T1,T2", value_parser = parse_pair)]
    pair: Option<[f64; 2]>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Zero-rate panel CSV.
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ChainArgs {
    /// Chain CSV written by `gibbs`; defaults to `<out>/chain.csv`.
    #[arg(long, value_name = "PATH")]
    chain: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a panel and write it back normalized.
    Ingest(DataArgs),
    /// Conditional maximum likelihood with standard errors.
    Mle(DataArgs),
    /// Run the constrained Gibbs sampler and summarize the chain.
    Gibbs(DataArgs),
    /// Posterior summaries, densities and scatter data from a chain file.
    Summarize(ChainArgs),
    /// Posterior yield fan with Nelson-Siegel and Smith-Wilson curves.
    Extrapolate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        chain: ChainArgs,
    },
    /// Geweke, CUSUM and autocorrelation diagnostics of a chain file.
    Diagnose(ChainArgs),
    /// Simulate a two-maturity panel from structural parameters.
    Simulate,
}

impl Cli {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::load(self.config.as_deref())?;
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        if let Some(p) = self.rates_in_percent {
            c.rates_in_percent = p;
        }
        if let Some(d) = self.decomposition {
            c.decomposition = d;
        }
        if let Some(p) = self.pair {
            c.pair = p;
        }
        let data = match &self.command {
            Command::Ingest(d) | Command::Mle(d) | Command::Gibbs(d) | Command::Extrapolate { data: d, .. } => {
                d.data.as_ref()
            }
            _ => None,
        };
        if let Some(d) = data {
            c.data = Some(d.clone());
        }
        Ok(c)
    }
}

fn chain_path(config: &RunConfig, args: &ChainArgs) -> PathBuf {
    args.chain.clone().unwrap_or_else(|| config.out.join("chain.csv"))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let config = cli.resolve()?;
    match &cli.command {
        Command::Ingest(_) => commands::ingest(&config)?,
        Command::Mle(_) => commands::mle(&config)?,
        Command::Gibbs(_) => commands::gibbs(&config)?,
        Command::Summarize(a) => commands::summarize_chain(&config, &chain_path(&config, a))?,
        Command::Extrapolate { chain, .. } => commands::extrapolate(&config, &chain_path(&config, chain))?,
        Command::Diagnose(a) => return Ok(!commands::diagnose_chain(&config, &chain_path(&config, a))?),
        Command::Simulate => commands::simulate(&config)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let defaults = format!("Configuration keys and defaults:\n\n{}", RunConfig::default().to_toml());
    let mut cmd = Cli::command().after_long_help(defaults.clone());
    for name in ["ingest", "mle", "gibbs", "summarize", "extrapolate", "diagnose", "simulate"] {
        let d = defaults.clone();
        cmd = cmd.mut_subcommand(name, |s| s.after_help(d));
    }
    let cli = match Cli::from_arg_matches(&cmd.get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
