use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use relicdig_core::catalog::{load_spec, CatalogError};
use relicdig_core::mesher::obj::write_obj;
use relicdig_core::mesher::topology::weld;
use relicdig_core::mesher::EARTH_ISOVALUE;
use relicdig_core::sim::{run_bot, write_metrics_csv, BotPolicy, MetricsRow, RunMetrics, RunOptions};
use relicdig_core::{mesh_all, mesh_artifact, ArtifactSpec, MeshChunk, SessionReport};
use relicdig_service::Catalog;
use serde::Serialize;

use crate::{CliError, PolicyKind, SimulateArgs};

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_spec(path: &Path) -> Result<ArtifactSpec, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(load_spec(&text)?)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn validate(package: &Path, json: bool) -> Result<(), CliError> {
    let text = fs::read_to_string(package).map_err(io_err(package))?;
    match load_spec(&text) {
        Ok(spec) => {
            if json {
                let out = serde_json::json!({
                    "valid": true,
                    "name": spec.name,
                    "spec_hash": spec.spec_hash(),
                });
                println!("{out}");
            } else {
                println!("{}: valid relic {:?}", package.display(), spec.name);
            }
            Ok(())
        }
        Err(e) => {
            // the verdict is the output; main prints the reason once more on stderr
            if !json {
                println!("{}: invalid", package.display());
            }
            Err(CliError::Package(e))
        }
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    relic: &'a str,
    spec_hash: &'a str,
    policy: &'a BotPolicy,
    report: &'a SessionReport,
    metrics: &'a RunMetrics,
}

#[derive(Serialize)]
struct RunOutcome {
    run_dir: PathBuf,
    #[serde(flatten)]
    row: MetricsRow,
}

/// Run directories are named by seed and spec hash so runs of different
/// packages never overwrite each other.
fn run_dir_name(seed: u64, spec_hash: &str) -> String {
    format!("seed{seed}-{}", &spec_hash[..12])
}

pub fn simulate(args: &SimulateArgs, json: bool) -> Result<(), CliError> {
    let spec = Arc::new(read_spec(&args.package)?);
    if args.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let policy = match args.policy {
        PolicyKind::RandomCarver => BotPolicy::random_carver(args.rate, args.seed),
        PolicyKind::SurfaceFollower => BotPolicy::surface_follower(args.stand_off, args.seed),
        PolicyKind::RiskAverse => BotPolicy::risk_averse(args.margin, args.seed),
    };
    policy.validate()?;
    let params = args.time_limit.map(|time_limit_s| relicdig_core::SessionParams {
        time_limit_s,
        ..spec.session
    });
    let opts = RunOptions {
        params,
        tool: args.tool.clone(),
        max_strokes: args.max_strokes,
    };
    let seeds: Vec<u64> = (0..args.runs).map(|i| args.seed.wrapping_add(i)).collect();
    let outcomes: Vec<RunOutcome> = seeds
        .par_iter()
        .map(|&seed| simulate_one(&spec, BotPolicy { seed, ..policy }, &opts, &args.out))
        .collect::<Result<_, _>>()?;

    if json {
        println!("{}", serde_json::to_string(&outcomes).expect("outcomes serialize"));
    } else {
        for o in &outcomes {
            println!(
                "seed {}: {:?} in {:.1} s, {} strokes, {} hits, exposure {:.3} -> {}",
                o.row.seed,
                o.row.status,
                o.row.duration,
                o.row.strokes,
                o.row.hits,
                o.row.exposure,
                o.run_dir.display()
            );
        }
    }
    Ok(())
}

fn simulate_one(
    spec: &Arc<ArtifactSpec>,
    policy: BotPolicy,
    opts: &RunOptions,
    out: &Path,
) -> Result<RunOutcome, CliError> {
    let run = run_bot(Arc::clone(spec), &policy, opts)?;
    let session = &run.session;
    let dir = out.join(run_dir_name(policy.seed, session.spec_hash()));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    write_file(&dir.join("replay.jsonl"), session.export_replay())?;

    let row = MetricsRow::from_run(&spec.name, &policy, &run);
    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, std::slice::from_ref(&row)).expect("csv into memory");
    write_file(&dir.join("metrics.csv"), csv)?;

    let summary = RunSummary {
        relic: &spec.name,
        spec_hash: session.spec_hash(),
        policy: &policy,
        report: &run.report,
        metrics: &run.metrics,
    };
    let summary = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&dir.join("summary.json"), summary + "\n")?;

    let earth = mesh_all(session.grid(), EARTH_ISOVALUE);
    write_obj_file(&dir.join("earth.obj"), &[("earth", &earth)])?;
    write_obj_file(&dir.join("artifact.obj"), &[("artifact", session.artifact_mesh())])?;

    Ok(RunOutcome { run_dir: dir, row })
}

fn write_obj_file(path: &Path, groups: &[(&str, &[MeshChunk])]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = io::BufWriter::new(file);
    write_obj(&mut out, groups)
        .and_then(|()| out.flush())
        .map_err(io_err(path))
}

pub fn mesh(package: &Path, out: &Path, json: bool) -> Result<(), CliError> {
    let spec = read_spec(package)?;
    let params = spec
        .grid_params()
        .map_err(|e| CliError::Package(CatalogError::Invalid(e.into())))?;
    let chunks = mesh_artifact(&spec.geometry, &params)?;
    write_obj_file(out, &[(spec.name.as_str(), &chunks)])?;

    let welded = weld(&chunks);
    let edges = welded.edge_report();
    if json {
        let report = serde_json::json!({
            "relic": spec.name,
            "path": out,
            "vertices": welded.positions.len(),
            "triangles": welded.triangles.len(),
            "watertight": edges.is_watertight(),
        });
        println!("{report}");
    } else {
        println!(
            "{}: {} vertices, {} triangles, {} -> {}",
            spec.name,
            welded.positions.len(),
            welded.triangles.len(),
            if edges.is_watertight() { "watertight" } else { "open" },
            out.display()
        );
    }
    Ok(())
}

pub fn serve(catalog_dir: Option<&Path>, addr: SocketAddr, json: bool) -> Result<(), CliError> {
    let mut catalog = Catalog::builtin();
    if let Some(dir) = catalog_dir {
        catalog.load_dir(dir)?;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(io_err(Path::new("tokio runtime")))?;
    runtime.block_on(async move {
        let listener = relicdig_service::bind(addr)
            .await
            .map_err(io_err(Path::new(&addr.to_string())))?;
        let local = listener.local_addr().map_err(io_err(Path::new(&addr.to_string())))?;
        if json {
            let names: Vec<&str> = catalog.names().collect();
            println!("{}", serde_json::json!({ "listening": local.to_string(), "relics": names }));
        } else {
            println!("listening on ws://{local} ({} relics)", catalog.len());
        }
        io::stdout().flush().ok();
        relicdig_service::serve(listener, Arc::new(catalog), shutdown_signal())
            .await
            .map_err(io_err(Path::new(&local.to_string())))
    })
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = term.recv() => {}
                    _ = tokio::signal::ctrl_c() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}
