//! `mcm` — meshfree mixed-collocation monodomain solver.
//!
//! Subcommands: `simulate` runs a config file, `immerse` builds a node cloud
//! from a closed surface, `compare` reports metrics between two run
//! directories, `shapecheck` sweeps the trial-function invariants over a
//! cloud. Exit codes: 0 success, 2 configuration/input error, 3 numerical
//! failure, 4 I/O failure. Log verbosity comes from the `MCM_LOG`
//! environment variable (error/warn/info/debug).

mod commands;
mod config;

use clap::{Parser, Subcommand};
use mcm_core::solver::SolverError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        use mcm_core::approximants::ShapeError;
        use mcm_core::ionic::IonicError;
        match &e {
            SolverError::Io(_) => CliError::Io(e.to_string()),
            SolverError::Cloud(mcm_core::node_cloud::CloudError::Io(_)) => CliError::Io(e.to_string()),
            SolverError::Unstable { .. } => CliError::Numerical(e.to_string()),
            SolverError::Shape(ShapeError::Singular { .. }) => CliError::Numerical(e.to_string()),
            SolverError::Ionic(IonicError::NonFinite { .. }) => CliError::Numerical(e.to_string()),
            SolverError::Ionic(IonicError::NoBracket { .. }) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "mcm", version, about = "Meshfree mixed-collocation solver for the cardiac monodomain model")]
struct Cli {
    /// Cap the worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a config file.
    Simulate {
        /// Path to the TOML run configuration.
        config: PathBuf,
        /// Override the output directory from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Also dump the assembled operators in `row col value` text format.
        #[arg(long)]
        dump_matrices: bool,
    },
    /// Build an immersed node cloud from a closed surface mesh.
    Immerse {
        /// Surface mesh file (`ntriangles nvertices` header format).
        surface: PathBuf,
        /// Lattice spacing in cm.
        #[arg(long)]
        spacing: f64,
        /// Output cloud file.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compare two run directories: NRMS of the final snapshot, TPD per
    /// probe, mean LAT over interior and boundary nodes.
    Compare { run_a: PathBuf, run_b: PathBuf },
    /// Sweep trial-function invariants over a node cloud.
    Shapecheck {
        /// Cloud file in the node-cloud text format.
        cloud: PathBuf,
        /// Trial function kind.
        #[arg(long, default_value = "rpi")]
        trial: String,
        /// Multiquadric shape factor r_c = alpha_c * d_c.
        #[arg(long, default_value_t = 1.03)]
        alpha_c: f64,
        /// Multiquadric exponent (default 1.42 in 2D, 1.82 in 3D).
        #[arg(long)]
        q: Option<f64>,
        /// Diagonal regularization of the MKI correlation matrix.
        #[arg(long, default_value_t = 0.0)]
        nugget: f64,
        /// Support construction: radius or knn.
        #[arg(long, default_value = "radius")]
        support: String,
        /// Dilation factor for radius supports.
        #[arg(long, default_value_t = 2.8)]
        alpha_sd: f64,
        /// Neighbor count for knn supports.
        #[arg(long, default_value_t = 150)]
        k: usize,
        /// Characteristic spacing override (estimated from the cloud when
        /// omitted).
        #[arg(long)]
        h: Option<f64>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MCM_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} worker threads: {e}");
            std::process::exit(2);
        }
    }
    let result = match cli.command {
        Command::Simulate { config, output_dir, dump_matrices } => {
            commands::simulate(&config, output_dir.as_deref(), dump_matrices)
        }
        Command::Immerse { surface, spacing, output } => commands::immerse(&surface, spacing, &output),
        Command::Compare { run_a, run_b } => commands::compare(&run_a, &run_b),
        Command::Shapecheck { cloud, trial, alpha_c, q, nugget, support, alpha_sd, k, h } => {
            commands::shapecheck(&cloud, &trial, alpha_c, q, nugget, &support, alpha_sd, k, h)
        }
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
