//! `relicdig`: validate relic packages, run bot simulations, export meshes and
//! serve live sessions.

mod commands;

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use relicdig_core::catalog::CatalogError;
use relicdig_core::mesher::MeshError;
use relicdig_core::sim::SimError;
use relicdig_service::{CatalogDirError, CATALOG_DIR_ENV};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "relicdig", version, about = "Voxel relic excavation engine")]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a relic package and report the first problem found.
    Validate {
        /// Path to the package JSON.
        package: PathBuf,
    },
    /// Play sessions with a scripted bot and write a run directory per seed.
    Simulate(SimulateArgs),
    /// Export the relic's artifact mesh as Wavefront OBJ.
    Mesh {
        package: PathBuf,
        /// Output .obj path.
        out: PathBuf,
    },
    /// Serve live sessions over WebSocket until interrupted.
    Serve {
        /// Extra directory of relic packages, added to the bundled relics.
        #[arg(long, env = CATALOG_DIR_ENV)]
        catalog: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        /// Port to listen on; 0 picks a free one.
        #[arg(long, default_value_t = 8765)]
        port: u16,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    RandomCarver,
    SurfaceFollower,
    RiskAverse,
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    package: PathBuf,
    #[arg(long, value_enum)]
    policy: PolicyKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of runs, with seeds counting up from --seed.
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Stroke rate of the random carver.
    #[arg(long, default_value_t = 15.0)]
    rate: f64,
    /// Surface follower stand-off in meters.
    #[arg(long, default_value_t = 0.0)]
    stand_off: f64,
    /// Risk-averse clearance in meters.
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
    /// Tool selected before the first stroke.
    #[arg(long)]
    tool: Option<String>,
    /// Stop striking after this many strokes.
    #[arg(long)]
    max_strokes: Option<u64>,
    /// Override the package's time limit, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Package(#[from] CatalogError),
    #[error("{0}")]
    Catalog(#[from] CatalogDirError),
    #[error("{0}")]
    Mesh(#[from] MeshError),
    #[error("{0}")]
    Sim(#[from] SimError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Catalog(CatalogDirError::Io { .. }) => 1,
            CliError::Sim(SimError::Policy(_)) | CliError::Usage(_) => 64,
            CliError::Package(_)
            | CliError::Catalog(CatalogDirError::Package { .. })
            | CliError::Mesh(_)
            | CliError::Sim(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Validate { package } => commands::validate(&package, cli.json),
        Command::Simulate(args) => commands::simulate(&args, cli.json),
        Command::Mesh { package, out } => commands::mesh(&package, &out, cli.json),
        Command::Serve {
            catalog,
            bind,
            port,
        } => commands::serve(catalog.as_deref(), (bind, port).into(), cli.json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.json {
                println!("{}", serde_json::json!({ "error": e.to_string() }));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
