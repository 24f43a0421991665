use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use qtps::Exec;
use qtps_cli::{load_config, CliError, Inputs};

/// Transition path sampling with QUBO-encoded trial moves.
#[derive(Debug, Parser)]
#[command(name = "qtps", version)]
struct Cli {
    /// Repeat for more detail on stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run config.
    #[arg(short, long)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Explore the landscape and write the point cloud.
    Explore {
        #[command(flatten)]
        common: Common,
    },
    /// Build the transition graph from a cloud.
    Graph {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cloud: Option<PathBuf>,
    },
    /// Calibrate the annealer's outcome distribution per budget.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Run the Markov chains.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Autocorrelation, path density and summary tables.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        chains: Option<PathBuf>,
    },
    /// Exact ground state, path law and shortest path of a small graph.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: Option<PathBuf>,
    },
}

fn run(cmd: Command) -> Result<PathBuf, CliError> {
    let exec = Exec::default();
    match cmd {
        Command::Explore { common } => qtps_cli::cmd_explore(&load_config(&common.config)?, exec),
        Command::Graph { common, cloud } => {
            let inputs = Inputs { cloud, ..Inputs::default() };
            qtps_cli::cmd_graph(&load_config(&common.config)?, &inputs)
        }
        Command::Calibrate { common, graph } => {
            let inputs = Inputs { graph, ..Inputs::default() };
            qtps_cli::cmd_calibrate(&load_config(&common.config)?, &inputs, exec)
        }
        Command::Sample {
            common,
            graph,
            calibration,
        } => {
            let inputs = Inputs {
                graph,
                calibration,
                ..Inputs::default()
            };
            qtps_cli::cmd_sample(&load_config(&common.config)?, &inputs, exec)
        }
        Command::Analyze {
            common,
            graph,
            calibration,
            chains,
        } => {
            let inputs = Inputs {
                graph,
                calibration,
                chains,
                ..Inputs::default()
            };
            qtps_cli::cmd_analyze(&load_config(&common.config)?, &inputs)
        }
        Command::Oracle { common, graph } => {
            let inputs = Inputs { graph, ..Inputs::default() };
            qtps_cli::cmd_oracle(&load_config(&common.config)?, &inputs, exec)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli.command) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
