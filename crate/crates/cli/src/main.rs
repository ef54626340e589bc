use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tnloop_cli::{run, Options};

#[derive(Parser)]
#[command(name = "tnloop", version, about = "Loop-cluster expansions for tensor-network states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// State file to resume from or to estimate on.
    #[arg(long, global = true)]
    state: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Exact reference values where tractable.
    #[arg(long, global = true)]
    oracle: Option<Switch>,
}

#[derive(Subcommand)]
enum Command {
    /// Prepare a ground state by simple update.
    Prepare,
    /// Loop-cluster estimates for a range of cluster sizes.
    Estimate,
    /// Extrapolate an estimates table.
    Extrapolate {
        /// Estimates CSV (default: <out>/estimates.csv).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Sweep bond dimensions and cluster sizes.
    Bench,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let (name, input) = match cli.command {
        Command::Prepare => ("prepare", None),
        Command::Estimate => ("estimate", None),
        Command::Extrapolate { input } => ("extrapolate", input),
        Command::Bench => ("bench", None),
    };
    let opts = Options {
        config: cli.config,
        state: cli.state,
        out: cli.out,
        input,
        seed: cli.seed,
        oracle: cli.oracle.map(|s| matches!(s, Switch::On)),
    };
    match run(name, &opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
