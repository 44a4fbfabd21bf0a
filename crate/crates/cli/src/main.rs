mod error;
mod eval;
mod output;
mod train;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "qdrl", version, about = "Quantile-regression distributional RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Comma-separated seeds.
    #[arg(long, value_name = "S[,S...]", value_delimiter = ',')]
    seed: Option<Vec<u64>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Policy evaluation on the windy gridworld: TD(0) and QRTD against Monte Carlo.
    GridworldEval {
        #[command(flatten)]
        common: Common,
        /// Episodes per learner, overriding the config
        #[arg(long, value_name = "K")]
        episodes: Option<usize>,
    },
    /// Train QR-DQN on a small control problem.
    TrainQrdqn {
        #[command(flatten)]
        common: Common,
        /// Environment: chain or gridworld.
        #[arg(long, value_name = "NAME", default_value = "chain")]
        env: String,
        /// Huber width; both 0 and 1 are run when absent.
        #[arg(long, value_name = "V")]
        kappa: Option<f64>,
    },
    /// Randomized checks of the contraction results and gradient bias.
    Verify {
        which: verify::Which,
        #[command(flatten)]
        common: Common,
        /// Random instances per check [default: 10000]
        #[arg(long, value_name = "K")]
        trials: Option<usize>,
    },
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("QDRL_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Argument(format!("QDRL_THREADS={value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Argument(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::GridworldEval { common, episodes } => eval::run(&common, episodes),
        Command::TrainQrdqn { common, env, kappa } => train::run(&common, &env, kappa),
        Command::Verify { which, common, trials } => verify::run(which, &common, trials),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
