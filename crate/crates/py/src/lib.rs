//! Python bindings. Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use mcrts_core::analogy::{deadline_for as core_deadline_for, Criticality, DeadlinePolicy};
use mcrts_core::kernel::{self, ScenarioError, Variant};
use mcrts_core::metrics;
use mcrts_core::network::{self as net, EdgeDelta, NetworkOverlay};
use mcrts_core::router::{self, Route};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn policy(spec: &str) -> PyResult<DeadlinePolicy> {
    DeadlinePolicy::preset(spec).ok_or_else(|| PyValueError::new_err(format!("unknown policy preset `{spec}`")))
}

#[pyclass(name = "RoadNetwork", frozen)]
struct PyRoadNetwork {
    inner: net::RoadNetwork,
}

#[pymethods]
impl PyRoadNetwork {
    /// Parse a network document (JSON text).
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: net::load_network(text).map_err(value_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.to_document()).map_err(value_err)
    }

    fn node_ids(&self) -> Vec<String> {
        self.inner.nodes().iter().map(|n| n.id.clone()).collect()
    }

    fn edge_ids(&self) -> Vec<String> {
        self.inner.edges().iter().map(|e| e.id.clone()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.edge_count()
    }

    fn __repr__(&self) -> String {
        format!("RoadNetwork({} nodes, {} edges)", self.inner.node_count(), self.inner.edge_count())
    }
}

#[pyclass(name = "TrafficState", frozen)]
struct PyTrafficState {
    inner: net::TrafficState,
}

#[pymethods]
impl PyTrafficState {
    #[staticmethod]
    fn free_flow(network: &PyRoadNetwork) -> Self {
        Self { inner: net::TrafficState::free_flow(&network.inner) }
    }

    /// New snapshot with `deltas` applied; `deltas` is a JSON list of
    /// `{"edge": ..., "congestion": ..., "halted": ...}` objects.
    fn updated(&self, network: &PyRoadNetwork, deltas: &str, time_s: f64) -> PyResult<Self> {
        let deltas: Vec<EdgeDelta> = serde_json::from_str(deltas).map_err(value_err)?;
        Ok(Self { inner: net::apply_update(&network.inner, &self.inner, &deltas, time_s).map_err(value_err)? })
    }

    fn snapshot_time_s(&self) -> f64 {
        self.inner.snapshot_time_s()
    }

    fn edge<'py>(&self, py: Python<'py>, network: &PyRoadNetwork, edge: &str) -> PyResult<Bound<'py, PyAny>> {
        let e = network.inner.edge_idx(edge).map_err(value_err)?;
        to_py(py, self.inner.edge(e))
    }
}

fn route_dict<'py>(py: Python<'py>, network: &net::RoadNetwork, r: &Route) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &serde_json::json!({
            "edges": r.edge_ids(network),
            "departure_s": r.departure_time_s(),
            "arrival_s": r.arrival_time_s(),
            "eta_s": r.total_eta_s(),
        }),
    )
}

/// Seconds to traverse `edge` entering at `t_s`, or None when impassable.
#[pyfunction]
fn traversal_time(network: &PyRoadNetwork, state: &PyTrafficState, edge: &str, t_s: f64) -> PyResult<Option<f64>> {
    let e = network.inner.edge_idx(edge).map_err(value_err)?;
    let tt = net::traversal_time(&network.inner, e, t_s, &state.inner, &NetworkOverlay::new()).map_err(value_err)?;
    Ok(tt.finite())
}

#[pyfunction]
#[pyo3(signature = (network, state, src, dst, t0_s = 0.0))]
fn fastest_route<'py>(
    py: Python<'py>,
    network: &PyRoadNetwork,
    state: &PyTrafficState,
    src: &str,
    dst: &str,
    t0_s: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let n = &network.inner;
    let (s, d) = (n.node_idx(src).map_err(value_err)?, n.node_idx(dst).map_err(value_err)?);
    let r = router::fastest_route(n, &state.inner, &NetworkOverlay::new(), s, d, t0_s).map_err(value_err)?;
    route_dict(py, n, &r)
}

#[pyfunction]
#[pyo3(signature = (network, state, src, dst, k, t0_s = 0.0))]
fn k_routes<'py>(
    py: Python<'py>,
    network: &PyRoadNetwork,
    state: &PyTrafficState,
    src: &str,
    dst: &str,
    k: usize,
    t0_s: f64,
) -> PyResult<Vec<Bound<'py, PyAny>>> {
    let n = &network.inner;
    let (s, d) = (n.node_idx(src).map_err(value_err)?, n.node_idx(dst).map_err(value_err)?);
    let rs = router::k_routes(n, &state.inner, &NetworkOverlay::new(), s, d, t0_s, k).map_err(value_err)?;
    rs.iter().map(|r| route_dict(py, n, r)).collect()
}

/// Relative deadline in seconds for a criticality ("C0".."C3"); None for C0.
#[pyfunction]
#[pyo3(signature = (criticality, policy_name = "nz"))]
fn deadline_for(criticality: &str, policy_name: &str) -> PyResult<Option<f64>> {
    let c: Criticality = serde_json::from_value(criticality.into()).map_err(value_err)?;
    Ok(core_deadline_for(c, &policy(policy_name)?))
}

#[pyclass(name = "Trace", frozen)]
struct PyTrace {
    inner: kernel::Trace,
}

#[pymethods]
impl PyTrace {
    #[staticmethod]
    fn from_ndjson(text: &str) -> PyResult<Self> {
        Ok(Self { inner: kernel::Trace::from_ndjson(text).map_err(value_err)? })
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    fn to_ndjson(&self) -> String {
        self.inner.to_ndjson()
    }

    fn outcomes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.outcomes)
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

/// Simulate a scenario file and return its trace.
#[pyfunction]
#[pyo3(signature = (scenario, seed = 42, variant = "mcrts"))]
fn run(scenario: PathBuf, seed: u64, variant: &str) -> PyResult<PyTrace> {
    let variant: Variant = variant.parse().map_err(value_err)?;
    let sc = kernel::load_scenario(&scenario).map_err(|e| match e {
        ScenarioError::Io { .. } => PyOSError::new_err(e.to_string()),
        other => value_err(other),
    })?;
    Ok(PyTrace { inner: kernel::run(&sc, seed, variant).map_err(value_err)? })
}

#[pyfunction]
#[pyo3(signature = (trace, policy_name = "nz"))]
fn compliance<'py>(py: Python<'py>, trace: &PyTrace, policy_name: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &metrics::compliance(&trace.inner, &policy(policy_name)?))
}

#[pyfunction]
#[pyo3(signature = (trace, policy_name = "nz"))]
fn mortality_delta(trace: &PyTrace, policy_name: &str) -> PyResult<f64> {
    Ok(metrics::mortality_delta(&trace.inner, &policy(policy_name)?))
}

#[pymodule]
fn mcrts(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRoadNetwork>()?;
    m.add_class::<PyTrafficState>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(traversal_time, m)?)?;
    m.add_function(wrap_pyfunction!(fastest_route, m)?)?;
    m.add_function(wrap_pyfunction!(k_routes, m)?)?;
    m.add_function(wrap_pyfunction!(deadline_for, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(compliance, m)?)?;
    m.add_function(wrap_pyfunction!(mortality_delta, m)?)?;
    Ok(())
}
