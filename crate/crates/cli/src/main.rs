use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kibam_cli::commands::{self, CliError};
use kibam_cli::{ModelFile, Overrides};

#[derive(Parser)]
#[command(
    name = "kibam",
    version,
    about = "Depletion bounds for a kinetic battery under random task loads"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lower bound on the probability of powering the task process.
    Solve(Common),
    /// The same bound for a single-well battery with all charge available.
    Linear(Common),
    /// Monte Carlo estimate of the survival probability.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        runs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write CSV and heatmap snapshots at the given times.
    Export {
        #[command(flatten)]
        common: Common,
        /// Comma-separated times in minutes.
        #[arg(long, value_delimiter = ',', required = true)]
        checkpoints: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "capacity-mAh")]
    capacity_mah: Option<f64>,
    #[arg(long)]
    horizon_min: Option<f64>,
    #[arg(long)]
    n_grid: Option<usize>,
    #[arg(long)]
    n_load_points: Option<usize>,
    /// Replace every load by its mean.
    #[arg(long)]
    dirac_loads: bool,
    /// Solver threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set_workers(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Validation("--workers must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        eprintln!("warning: built without the `parallel` feature, running on one thread");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<String, CliError> {
    let common = match &cli.command {
        Command::Solve(c) | Command::Linear(c) => c,
        Command::Simulate { common, .. } | Command::Export { common, .. } => common,
    };
    set_workers(common.workers)?;
    let mut overrides = Overrides {
        capacity_mah: common.capacity_mah,
        horizon_min: common.horizon_min,
        n_grid: common.n_grid,
        n_load_points: common.n_load_points,
        dirac_loads: common.dirac_loads,
        out: common.out.clone(),
    };
    if let Command::Export { checkpoints, .. } = &cli.command {
        // snapshots are taken at the checkpoints, the horizon is not used
        let last = checkpoints.iter().copied().fold(0.0, f64::max);
        overrides.horizon_min = overrides.horizon_min.or(Some(last.max(1.0)));
    }
    let model = ModelFile::load(&common.model)?.build(&overrides)?;
    Ok(match &cli.command {
        Command::Solve(_) => commands::solve(&model)?.to_string(),
        Command::Linear(_) => commands::linear(&model)?.to_string(),
        Command::Simulate { runs, seed, .. } => {
            commands::simulate_runs(&model, *runs, *seed)?.to_string()
        }
        Command::Export { checkpoints, .. } => commands::export(&model, checkpoints)?
            .iter()
            .flat_map(|f| [&f.inner_csv, &f.boundary_csv, &f.scalars, &f.heatmap])
            .map(|p| format!("wrote {}", p.display()))
            .collect::<Vec<_>>()
            .join("\n"),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
