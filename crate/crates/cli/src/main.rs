//! Command-line front end for ordinal relational event modelling.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::Context;
use crate::config::{Overrides, RunConfig, SelectionMode};
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "rem", version, about = "Ordinal relational event models for communication networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Per-network sizes and the mean row.
    Summarize,
    /// Fit one fixed specification to every network.
    Fit,
    /// Choose a specification per network by AICc.
    Select,
    /// Fitted versus null prediction rates for saved fits.
    Adequacy,
    /// Simulate trajectories from saved fits under each condition.
    Simulate,
    /// Simulate, then measure how concentration responds to each knock-out.
    Knockout,
    /// summarize, select, adequacy and knockout in one run.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Summarize => "summarize",
            Command::Fit => "fit",
            Command::Select => "select",
            Command::Adequacy => "adequacy",
            Command::Simulate => "simulate",
            Command::Knockout => "knockout",
            Command::Report => "report",
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum SelectionArg {
    Hill,
    Exhaustive,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    events: Option<PathBuf>,
    #[arg(long, global = true)]
    actors: Option<PathBuf>,
    /// CSV of network_id,specialist.
    #[arg(long, global = true)]
    meta: Option<PathBuf>,
    /// Networks as a single JSON document.
    #[arg(long, global = true)]
    json: Option<PathBuf>,
    /// Restrict to this network id (repeatable).
    #[arg(long = "network", global = true)]
    networks: Vec<String>,
    /// Comma-separated term names for `fit`.
    #[arg(long, global = true, value_delimiter = ',')]
    terms: Option<Vec<String>>,
    /// Master seed for simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Comma-separated knock-out conditions.
    #[arg(long, global = true, value_delimiter = ',')]
    conditions: Option<Vec<String>>,
    /// Events per simulated trajectory.
    #[arg(long, global = true)]
    length: Option<usize>,
    #[arg(long, global = true, value_enum)]
    selection: Option<SelectionArg>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory holding fits; `<out>/fits` by default.
    #[arg(long, global = true)]
    fit_dir: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More logging (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn run(cli: Cli) -> CliResult<()> {
    let c = cli.common;
    if let Some(jobs) = c.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    let overrides = Overrides {
        events: c.events,
        actors: c.actors,
        meta: c.meta,
        json: c.json,
        networks: c.networks,
        terms: c.terms,
        seed: c.seed,
        replicates: c.replicates,
        conditions: c.conditions,
        length: c.length,
        out: c.out,
        fit_dir: c.fit_dir,
        selection: c.selection.map(|s| match s {
            SelectionArg::Hill => SelectionMode::HillClimb,
            SelectionArg::Exhaustive => SelectionMode::Exhaustive,
        }),
    };
    let cfg = RunConfig::load(c.config.as_deref(), overrides)?;
    let ctx = Context {
        cfg,
        command: cli.command.name().to_string(),
    };
    if matches!(cli.command, Command::Simulate | Command::Knockout | Command::Report) {
        ctx.cfg.require_seed()?;
    }
    let networks = commands::load_inputs(&ctx.cfg)?;
    commands::write_resolved_config(&ctx)?;
    match cli.command {
        Command::Summarize => commands::summarize(&ctx, &networks),
        Command::Fit => commands::fit(&ctx, &networks),
        Command::Select => commands::select(&ctx, &networks),
        Command::Adequacy => commands::adequacy(&ctx, &networks),
        Command::Simulate => commands::simulate(&ctx, &networks),
        Command::Knockout => commands::knockout(&ctx, &networks),
        Command::Report => commands::report(&ctx, &networks),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
