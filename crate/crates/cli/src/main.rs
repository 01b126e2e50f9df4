//! `blockmax`: block maxima, GEV fits and return-level reports from CSV files.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::failure::{Failure, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "blockmax", version, about = "Block-maxima GEV analysis with MCMC return levels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split raw series into blocks and extract block maxima (or minima).
    Blocks(BlocksArgs),
    /// Fit the fixed- or random-location GEV model by MCMC.
    Fit(FitArgs),
    /// Return-level reports from a chain CSV and the fitted maxima.
    Returns(ReturnsArgs),
    /// Simulate a grouped panel of GEV maxima.
    Simulate(SimulateArgs),
    /// Maximum-likelihood GEV fit with Wald intervals.
    Mle(MleArgs),
    /// Repeated simulate-and-fit runs with interval coverage.
    ReplicateStudy(ReplicateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key=value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct McmcFlags {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long = "burn-in")]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ModelFlags {
    /// fixed or random
    #[arg(long)]
    mode: Option<String>,
    /// Tag defining the groups of the random location effect.
    #[arg(long = "group-tag")]
    group_tag: Option<String>,
}

#[derive(Debug, Args)]
pub struct BlocksArgs {
    #[command(flatten)]
    common: Common,
    /// CSV with `date,value` or `series,date,value` columns.
    #[arg(long)]
    input: Option<String>,
    /// year, month or size:N
    #[arg(long)]
    rule: Option<String>,
    /// max or min
    #[arg(long)]
    kind: Option<String>,
    /// Drop partial first/last calendar blocks.
    #[arg(long = "drop-partial")]
    drop_partial: bool,
    /// Treat values as price levels and block their simple daily percent
    /// changes 100 (p_t / p_{t-1} - 1). The return definition is an assumption.
    #[arg(long = "percent-change")]
    percent_change: bool,
    /// Tag to group the summary table by.
    #[arg(long = "summary-tag")]
    summary_tag: Option<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Block maxima CSV as written by `blocks` or `simulate`.
    #[arg(long)]
    input: Option<String>,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    mcmc: McmcFlags,
    /// Also write return-level reports for these k.
    #[arg(long)]
    k: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ReturnsArgs {
    #[command(flatten)]
    common: Common,
    /// Block maxima CSV used for the fit.
    #[arg(long)]
    input: Option<String>,
    /// chain.csv from `fit`.
    #[arg(long)]
    chain: Option<String>,
    #[arg(long)]
    k: Vec<f64>,
    /// `population` or a group label; defaults to all available scopes.
    #[arg(long)]
    scope: Vec<String>,
    /// Tag whose values name the chain's groups (inferred when omitted).
    #[arg(long = "group-tag")]
    group_tag: Option<String>,
}

#[derive(Debug, Args)]
struct TruthFlags {
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long = "per-group")]
    per_group: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    truth: TruthFlags,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct MleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    k: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    replicates: Option<usize>,
    /// mcmc or mle
    #[arg(long)]
    method: Option<String>,
    #[command(flatten)]
    truth: TruthFlags,
    #[command(flatten)]
    mcmc: McmcFlags,
    #[arg(long)]
    k: Vec<f64>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Blocks(a) => commands::blocks(a),
        Command::Fit(a) => commands::fit(a),
        Command::Returns(a) => commands::returns(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Mle(a) => commands::mle(a),
        Command::ReplicateStudy(a) => commands::replicate_study(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", Failure::usage(first).line());
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.exit as u8)
        }
    }
}
