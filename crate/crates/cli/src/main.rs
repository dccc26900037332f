//! `tibandit` command-line driver.

mod commands;
mod error;
mod presets;
mod schema;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::commands::Invocation;
use crate::error::CliError;
use crate::schema::{Command, Settings};

#[derive(Parser)]
#[command(name = "tibandit", version, about = "Adaptive bandit experiment simulators and Monte Carlo inference")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// Configuration file with [experiment], [policy], [mc] and [output] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset applied before the configuration file.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides experiment.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    /// Print progress every 10% of replications.
    #[arg(long)]
    verbose: bool,
    /// Override one key, as section.key=value. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Sub {
    /// Simulate one two-arm trajectory.
    MabSim(Common),
    /// Simulate one contextual trajectory.
    CmabSim(Common),
    /// Simulate limit-experiment paths.
    LimitSim {
        #[command(flatten)]
        common: Common,
        /// Number of independent paths.
        #[arg(long, default_value_t = 1)]
        paths: usize,
        /// Write only the terminal point of each path.
        #[arg(long)]
        terminal_only: bool,
    },
    /// Sample null distributions of test statistics.
    NullSample(Common),
    /// Null rejection rates of test statistics.
    SizeTable(Common),
    /// Rejection rates over an alternative grid.
    PowerCurve(Common),
    /// KS distances between null distributions across nuisance values.
    KsReport(Common),
}

fn cli() -> clap::Command {
    let presets = format!("Presets:\n  {}\n", presets::names().join("\n  "));
    let mut cmd = Cli::command();
    for c in Command::ALL {
        let extra = format!("{}\n{presets}", schema::help(c));
        cmd = cmd.mut_subcommand(c.name(), |s| s.after_help(extra));
    }
    cmd
}

fn settings(common: &Common) -> Result<Settings, CliError> {
    let mut s = Settings::default();
    if let Some(name) = &common.preset {
        let text = presets::text(name).ok_or_else(|| CliError::config(format!("unknown preset '{name}'")))?;
        s.apply_text(&text, name)?;
    }
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        s.apply_text(&text, &path.display().to_string())?;
    }
    for o in &common.set {
        s.apply_override(o)?;
    }
    if let Some(seed) = common.seed {
        s.set("experiment", "seed", &seed.to_string())?;
    }
    Ok(s)
}

fn execute(sub: Sub) -> Result<(), CliError> {
    let (command, common, paths, terminal_only) = match sub {
        Sub::MabSim(c) => (Command::MabSim, c, 0, false),
        Sub::CmabSim(c) => (Command::CmabSim, c, 0, false),
        Sub::LimitSim { common, paths, terminal_only } => (Command::LimitSim, common, paths, terminal_only),
        Sub::NullSample(c) => (Command::NullSample, c, 0, false),
        Sub::SizeTable(c) => (Command::SizeTable, c, 0, false),
        Sub::PowerCurve(c) => (Command::PowerCurve, c, 0, false),
        Sub::KsReport(c) => (Command::KsReport, c, 0, false),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot start worker pool: {e}")))?;
    }
    let inv = Invocation {
        command,
        settings: settings(&common)?,
        out: common.out,
        verbose: common.verbose,
        paths,
        terminal_only,
    };
    commands::run(&inv)
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let parsed = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match execute(parsed.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
