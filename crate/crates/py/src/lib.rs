//! Python bindings. Structured results (events, reports, metrics) cross the
//! boundary as JSON and come out as plain dicts and lists.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use relicdig_core::catalog::builtin_packages;
use relicdig_core::mesher::topology::weld;
use relicdig_core::session::replay;
use relicdig_core::session::SessionError;
use relicdig_core::sim::{run_bot as run_bot_core, BotPolicy, RunOptions};
use relicdig_core::{load_spec, mesh_artifact as mesh_artifact_core, ArtifactSpec, Event, Pose, Stroke};
use serde_json::json;

create_exception!(relicdig, DigError, PyException, "A session rejected an input.");

fn dig_err(e: SessionError) -> PyErr {
    DigError::new_err(format!("{}: {e}", e.code()))
}

fn spec_from(document: &str) -> PyResult<ArtifactSpec> {
    load_spec(document).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Names of the bundled relics.
#[pyfunction]
fn builtin_relics() -> Vec<&'static str> {
    builtin_packages().iter().map(|(name, _)| *name).collect()
}

/// Package document of a bundled relic.
#[pyfunction]
fn builtin_package(name: &str) -> PyResult<&'static str> {
    builtin_packages()
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, doc)| *doc)
        .ok_or_else(|| PyValueError::new_err(format!("no bundled relic named {name:?}")))
}

/// Validates a package document and returns the relic name.
#[pyfunction]
fn validate(document: &str) -> PyResult<String> {
    Ok(spec_from(document)?.name)
}

type MeshLists = (Vec<[f32; 3]>, Vec<[u32; 3]>);

/// Artifact surface as welded `(vertices, triangles)` lists.
#[pyfunction]
fn mesh_artifact(document: &str) -> PyResult<MeshLists> {
    let spec = spec_from(document)?;
    let params = spec
        .grid_params()
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let chunks = mesh_artifact_core(&spec.geometry, &params)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let welded = weld(&chunks);
    Ok((welded.positions, welded.triangles))
}

/// Plays one bot session to the end and returns its report and metrics.
#[pyfunction]
#[pyo3(signature = (document, policy, seed=0, rate=15.0, stand_off=0.0, margin=0.0, tool=None, max_strokes=None))]
#[allow(clippy::too_many_arguments)]
fn run_bot<'py>(
    py: Python<'py>,
    document: &str,
    policy: &str,
    seed: u64,
    rate: f64,
    stand_off: f64,
    margin: f64,
    tool: Option<String>,
    max_strokes: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = spec_from(document)?;
    let policy = match policy {
        "random-carver" => BotPolicy::random_carver(rate, seed),
        "surface-follower" => BotPolicy::surface_follower(stand_off, seed),
        "risk-averse" => BotPolicy::risk_averse(margin, seed),
        other => return Err(PyValueError::new_err(format!("unknown policy {other:?}"))),
    };
    let opts = RunOptions {
        params: None,
        tool,
        max_strokes,
    };
    let run = run_bot_core(spec, &policy, &opts).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &json!({ "report": run.report, "metrics": run.metrics }))
}

/// A live excavation session.
#[pyclass(name = "Session", module = "relicdig")]
struct PySession {
    inner: relicdig_core::Session,
}

#[pymethods]
impl PySession {
    #[new]
    #[pyo3(signature = (document, seed=0))]
    fn new(document: &str, seed: u64) -> PyResult<Self> {
        let inner = relicdig_core::Session::start(spec_from(document)?, seed).map_err(dig_err)?;
        Ok(PySession { inner })
    }

    /// Starts a session on a bundled relic.
    #[staticmethod]
    #[pyo3(signature = (name, seed=0))]
    fn builtin(name: &str, seed: u64) -> PyResult<Self> {
        Self::new(builtin_package(name)?, seed)
    }

    /// Rebuilds a session from an exported replay.
    #[staticmethod]
    fn replay(document: &str, replay_text: &str) -> PyResult<Self> {
        let inner = replay::replay(replay_text, spec_from(document)?)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PySession { inner })
    }

    /// `rotation` is a unit quaternion `(w, x, y, z)`.
    #[pyo3(signature = (t, position, rotation=[1.0, 0.0, 0.0, 0.0]))]
    fn apply_stroke<'py>(
        &mut self,
        py: Python<'py>,
        t: f64,
        position: [f64; 3],
        rotation: [f64; 4],
    ) -> PyResult<Bound<'py, PyAny>> {
        let stroke = Stroke::new(t, Pose { position, rotation });
        let events = self.inner.apply_stroke(&stroke).map_err(dig_err)?;
        to_py(py, &events)
    }

    fn tick<'py>(&mut self, py: Python<'py>, t: f64) -> PyResult<Bound<'py, PyAny>> {
        let events = self.inner.tick(t).map_err(dig_err)?;
        to_py(py, &events)
    }

    fn select_tool(&mut self, name: &str) -> PyResult<()> {
        self.inner.select_tool(name).map_err(dig_err)
    }

    #[getter]
    fn status(&self) -> PyResult<String> {
        Ok(serde_json::to_value(self.inner.status())
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default())
    }

    #[getter]
    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let s = self.inner.state();
        let state = json!({
            "status": s.status,
            "clock": s.clock,
            "clock_remaining": self.inner.time_remaining(),
            "health": s.health,
            "max_health": self.inner.params().max_health,
            "exposure": s.exposure,
            "active_tool": s.active_tool,
            "strokes": s.stroke_count,
            "hits": s.hits,
            "revealed_trigger_ids": s.revealed_trigger_ids,
        });
        to_py(py, &state)
    }

    #[getter]
    fn events<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let events: &[Event] = self.inner.events();
        to_py(py, &events)
    }

    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.report())
    }

    fn export_replay(&self) -> String {
        self.inner.export_replay()
    }

    fn event_log_jsonl(&self) -> String {
        self.inner.event_log_jsonl()
    }
}

#[pymodule]
fn relicdig(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DigError", m.py().get_type::<DigError>())?;
    m.add_class::<PySession>()?;
    m.add_function(wrap_pyfunction!(builtin_relics, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_package, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(mesh_artifact, m)?)?;
    m.add_function(wrap_pyfunction!(run_bot, m)?)?;
    Ok(())
}
