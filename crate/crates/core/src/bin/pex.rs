use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pex_core::workflow::{
    cmd_backtest, cmd_launch, cmd_phase1, cmd_phase2, cmd_report, cmd_simulate, CommandOutcome, ExperimentConfig,
    Overrides, RunDir, WorkflowError,
};

/// Personalized experimentation workflow.
///
/// Exit codes: 0 success, 1 error, 2 stopped at a decision gate.
#[derive(Parser)]
#[command(name = "pex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated randomized log.
    Simulate(Common),
    /// Train CATE models, check calibration, search offline, select candidates.
    Phase1 {
        #[command(flatten)]
        common: Common,
        /// Continue past a failed calibration check.
        #[arg(long)]
        accept: bool,
        /// Add the launch holdout's randomized records to the training data.
        #[arg(long)]
        retrain: bool,
    },
    /// Measure the candidates online and recommend a policy.
    Phase2 {
        #[command(flatten)]
        common: Common,
        /// Recommend this online candidate instead of the default choice.
        #[arg(long)]
        candidate_index: Option<usize>,
    },
    /// Route traffic through the recommended (or chosen) policy with a randomized holdout.
    Launch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        candidate_index: Option<usize>,
    },
    /// Compare the launched policy against the holdout.
    Backtest(Common),
    /// Write plot-ready CSV tables from the run's artifacts.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Parent directory of run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Override the number of online candidates.
    #[arg(long)]
    k: Option<usize>,
    /// Override the number of online rounds.
    #[arg(long)]
    rounds: Option<usize>,
}

fn open(common: &Common) -> Result<RunDir, WorkflowError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    cfg.apply(&Overrides { seed: common.seed, k: common.k, rounds: common.rounds });
    RunDir::open(&common.out, cfg)
}

fn run(cli: Cli) -> Result<CommandOutcome, WorkflowError> {
    let (common, action): (&Common, Box<dyn Fn(&RunDir) -> Result<CommandOutcome, WorkflowError>>) = match &cli.command {
        Command::Simulate(c) => (c, Box::new(cmd_simulate)),
        Command::Phase1 { common, accept, retrain } => {
            let (accept, retrain) = (*accept, *retrain);
            (common, Box::new(move |d| cmd_phase1(d, accept, retrain)))
        }
        Command::Phase2 { common, candidate_index } => {
            let c = *candidate_index;
            (common, Box::new(move |d| cmd_phase2(d, c)))
        }
        Command::Launch { common, candidate_index } => {
            let c = *candidate_index;
            (common, Box::new(move |d| cmd_launch(d, c)))
        }
        Command::Backtest(c) => (c, Box::new(cmd_backtest)),
        Command::Report(c) => (c, Box::new(cmd_report)),
    };
    let dir = open(common)?;
    println!("run directory: {}", dir.path.display());
    action(&dir)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(CommandOutcome::Completed(msg)) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Ok(CommandOutcome::Gated(msg)) => {
            eprintln!("stopped: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
