use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use elastolbm::runner::{self, RunOptions, SolverChoice};
use elastolbm::scenario::{self, ConfigError, Resolved};
use elastolbm::Execution;

const EXIT_CONFIG: u8 = 2;
const EXIT_ABORT: u8 = 3;

/// Plane-strain elastodynamics with a lattice-Boltzmann solver.
///
/// CONFIG is a TOML scenario file or one of the presets: tension, shear, hole.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the resolved scenario and derived parameters.
    Describe { config: String },
    /// Run a scenario.
    Run {
        config: String,
        #[arg(long, value_enum, default_value_t = Solver::Lbm)]
        solver: Solver,
        /// Synchronization period in steps (0 disables).
        #[arg(long)]
        sync: Option<u64>,
        /// Output directory [default: out/<scenario name>].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra snapshot times in L/c_s.
        #[arg(long, num_args = 1..)]
        snapshot_at: Vec<f64>,
        /// Single-threaded, bit-reproducible sweeps.
        #[arg(long)]
        serial: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Solver {
    Lbm,
    Oracle,
    Both,
}

fn resolve(config: &str) -> Result<Resolved, ConfigError> {
    scenario::load(config)?.build()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (config, rest) = match &cli.command {
        Command::Describe { config } => (config, None),
        Command::Run { config, solver, sync, out, snapshot_at, serial } => {
            (config, Some((solver, sync, out, snapshot_at, serial)))
        }
    };
    let resolved = match resolve(config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {config}: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let Some((solver, sync, out, snapshot_at, serial)) = rest else {
        print!("{}", runner::describe(&resolved));
        return ExitCode::SUCCESS;
    };
    let out = out.clone().unwrap_or_else(|| PathBuf::from("out").join(&resolved.scenario.name));
    let opts = RunOptions {
        solver: match solver {
            Solver::Lbm => SolverChoice::Lbm,
            Solver::Oracle => SolverChoice::Oracle,
            Solver::Both => SolverChoice::Both,
        },
        sync: *sync,
        out: Some(out.clone()),
        snapshot_at: snapshot_at.clone(),
        exec: if *serial { Execution::Serial } else { Execution::Parallel },
    };
    match runner::run(&resolved, &opts) {
        Ok(report) => {
            for r in &report.runs {
                println!("{}: {} steps to t = {:.4} in {:.1?} ({:?})", r.kind.name(), r.steps, r.t_end, r.wall, r.status);
            }
            println!("output written to {}", out.display());
            if report.aborted() {
                ExitCode::from(EXIT_ABORT)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
