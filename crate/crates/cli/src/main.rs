//! `llmsearch`: run, replay and report LLM-guided program searches.
//!
//! Exit codes: 0 success, 1 runtime failure (or a replay that diverged),
//! 2 configuration error, 3 provider authentication failure.

mod config;
mod error;
mod oracle;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "llmsearch",
    version,
    about = "LLM-guided hill-climbing program search"
)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a search experiment and write its artifacts.
    Run(RunArgs),
    /// Re-execute a run from its recorded cassette and compare logs.
    Replay {
        /// Run directory holding config.json, cassette.jsonl and log.jsonl.
        run_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel_trials: usize,
    },
    /// Summary, rank and curve tables over run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reference computations that need no language model.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Vehicle searches over several rotation speeds.
    Sweep {
        /// Comma-separated rotation speeds in degrees per step.
        #[arg(long, value_delimiter = ',', required = true)]
        omegas: Vec<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Serve the built-in stub runner on stdio.
    #[command(hide = true)]
    StubRunner,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Evolutionary baseline on the maze objective.
    MazeEa {
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long, default_value_t = 50_000)]
        evals: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Checks maze scoring against path enumeration on every wall pattern.
    MazeVerify {
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
    },
}

#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// breakout, freeway, asterix, vehicle or maze.
    #[arg(long)]
    pub task: Option<String>,
    /// `scripted:<cassette.jsonl>` or a provider defined in the config file.
    #[arg(long)]
    pub provider: Option<String>,
    /// TOML file with provider definitions and defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub max_repairs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stop a trial once its incumbent reaches this fitness.
    #[arg(long)]
    pub target_fitness: Option<f64>,
    /// Episodes per evaluation for the grid games.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Vehicle rotation speed in degrees per step.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Runner command line, split on whitespace. Defaults to the built-in stub runner.
    #[arg(long)]
    pub runner: Option<String>,
    #[arg(long)]
    pub call_timeout_ms: Option<u64>,
    #[arg(long)]
    pub load_timeout_ms: Option<u64>,
    /// Trials run concurrently; above 1 the provider call order is not reproducible.
    #[arg(long, default_value_t = 1)]
    pub parallel_trials: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => run::cmd_run(&args),
        Command::Replay {
            run_dir,
            out,
            parallel_trials,
        } => match run::cmd_replay(&run_dir, &out, parallel_trials)? {
            true => Ok(()),
            false => Err(CliError::Failed(
                "replayed log differs from the recorded one".into(),
            )),
        },
        Command::Report { runs, out } => report::cmd_report(&runs, out.as_deref()),
        Command::Oracle(OracleCommand::MazeEa {
            size,
            width,
            height,
            evals,
            seed,
            out,
        }) => oracle::maze_ea(size, width, height, evals, seed, out.as_deref()),
        Command::Oracle(OracleCommand::MazeVerify {
            size,
            width,
            height,
        }) => oracle::maze_verify(size, width, height),
        Command::Sweep { omegas, run } => {
            if run.task.as_deref().is_some_and(|t| t != "vehicle") {
                return Err(CliError::Config(
                    "sweep only applies to the vehicle task".into(),
                ));
            }
            run::cmd_sweep(&run, &omegas)
        }
        Command::StubRunner => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            llmsearch::stub::serve(stdin.lock(), stdout.lock())
                .map_err(|e| CliError::Failed(e.to_string()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("llmsearch: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
