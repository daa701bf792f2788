//! `spicetrack` command-line front end.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spicetrack::montecarlo::BenchmarkSummary;
use spicetrack::Execution;

use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "spicetrack", version, about = "Track a varying number of sources with a sensor array")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesise a scenario and write its snapshots and ground truth.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write snapshots in the little-endian binary layout.
        #[arg(long)]
        binary: bool,
    },
    /// Run algorithms over one stream, writing per-tick records and estimates.
    Run(Common),
    /// Monte Carlo benchmark: per-tick means over independent trials.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Run trials one after another instead of on the thread pool.
        #[arg(long)]
        sequential: bool,
    },
    /// Write diagnostic spectra over the grid.
    Spectra(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Algorithm labels: rbf, relax, relax-phd, window, subspace.
    #[arg(long = "algo", value_name = "NAME[,NAME...]", value_delimiter = ',')]
    algo: Option<Vec<String>>,
    #[arg(long, value_name = "N")]
    trials: Option<usize>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory [default: $SPICETRACK_OUT, else ./spicetrack-out].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "X")]
    grid_spacing: Option<f64>,
    /// Snapshot file (text or binary) to read instead of synthesising.
    #[arg(long, value_name = "PATH")]
    snapshots: Option<PathBuf>,
    /// Ground-truth file matching --snapshots.
    #[arg(long, value_name = "PATH")]
    truth: Option<PathBuf>,
    /// Ticks at which to record spectra.
    #[arg(long, value_name = "T[,T...]", value_delimiter = ',')]
    spectra_ticks: Option<Vec<usize>>,
}

impl Common {
    fn load(self) -> Result<RunConfig, CliError> {
        RunConfig::load(
            self.config.as_deref(),
            Overrides {
                algorithms: self.algo,
                trials: self.trials,
                seed: self.seed,
                out: self.out,
                grid_spacing: self.grid_spacing,
                snapshots: self.snapshots,
                truth: self.truth,
                spectra_ticks: self.spectra_ticks,
            },
        )
    }
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, binary } => report(&commands::simulate(&common.load()?, binary)?),
        Command::Run(common) => report(&commands::run(&common.load()?)?),
        Command::Spectra(common) => report(&commands::spectra(&common.load()?)?),
        Command::Benchmark { common, sequential } => {
            let cfg = common.load()?;
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let (paths, summaries) = commands::benchmark(&cfg, exec)?;
            report(&paths);
            println!("{:<10} {:>10} {:>10} {:>10}", "algorithm", "md", "fa", "mse");
            for s in &summaries {
                let all = |v: &[f64]| BenchmarkSummary::window_mean(v, 1, s.horizon());
                println!(
                    "{:<10} {:>10.4} {:>10.4} {:>10.4}",
                    s.label,
                    all(&s.md_mean),
                    all(&s.fa_mean),
                    all(&s.mse_mean)
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spicetrack: {e}");
            ExitCode::from(e.code())
        }
    }
}
