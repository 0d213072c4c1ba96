//! Python bindings: configuration, closed-loop runs, sweeps, beam patterns
//! and the numerical building blocks.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use wpcn_core::capacity::CapacityParams;
use wpcn_core::config::BUNDLED_FIVE_NODE;
use wpcn_core::eigen::{max_eigvec as dominant, EigenOptions, HermitianMatrix};
use wpcn_core::model::{congestion_threshold, energy_scale};
use wpcn_core::simulator::{angle_grid, beam_pattern, SlotRecord};
use wpcn_core::{ConfigFile, NetworkState, RunConfig, RunMetrics, WpcnError};

fn py_err(err: WpcnError) -> PyErr {
    match err {
        WpcnError::Io(_) => PyOSError::new_err(err.to_string()),
        WpcnError::Contract(_) | WpcnError::BatteryOverdraw { .. } => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

/// A parsed TOML configuration.
#[pyclass(name = "Config", module = "wpcn", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    file: ConfigFile,
}

impl PyConfig {
    fn build(&self) -> PyResult<RunConfig> {
        self.file.build().map_err(py_err)
    }
}

#[pymethods]
impl PyConfig {
    /// Parse `text` (the bundled five-node example when omitted), then apply
    /// `overrides`, a list of `("dotted.key", "value")` pairs, in order.
    #[new]
    #[pyo3(signature = (text = None, overrides = None))]
    fn new(text: Option<&str>, overrides: Option<Vec<(String, String)>>) -> PyResult<Self> {
        let overrides = overrides.unwrap_or_default();
        let file = ConfigFile::parse_with_overrides(text.unwrap_or(BUNDLED_FIVE_NODE), &overrides).map_err(py_err)?;
        Ok(Self { file })
    }

    #[staticmethod]
    #[pyo3(signature = (path, overrides = None))]
    fn load(path: PathBuf, overrides: Option<Vec<(String, String)>>) -> PyResult<Self> {
        let file = ConfigFile::load(&path, &overrides.unwrap_or_default()).map_err(py_err)?;
        Ok(Self { file })
    }

    /// A copy with one more `KEY=VALUE` override applied.
    fn with_override(&self, key: &str, value: &str) -> PyResult<Self> {
        let text = self.file.to_toml().map_err(py_err)?;
        Self::new(Some(&text), Some(vec![(key.into(), value.into())]))
    }

    fn to_toml(&self) -> PyResult<String> {
        self.file.to_toml().map_err(py_err)
    }

    #[getter]
    fn slots(&self) -> u64 {
        self.file.run.slots
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.file.run.seed
    }

    #[getter]
    fn v_list(&self) -> Option<Vec<f64>> {
        self.file.run.v_list.clone()
    }

    /// Derived constants: delta, alpha, energy_scale, threshold, capacity_max, v.
    fn constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let k = self.build()?.constants;
        let d = PyDict::new(py);
        d.set_item("p_max", k.p_max())?;
        d.set_item("p_ap_max", k.p_ap_max())?;
        d.set_item("arrival_peak", k.arrival_peak())?;
        d.set_item("capacity_max", k.capacity_max())?;
        d.set_item("delta", k.delta())?;
        d.set_item("alpha", k.alpha())?;
        d.set_item("energy_scale", k.energy_scale())?;
        d.set_item("threshold", k.threshold())?;
        d.set_item("v", k.v())?;
        Ok(d)
    }

    /// `nodes`, `antennas`, `links` as `(tx, rx)` and `streams` as `(source, sink)`.
    fn topology<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let t = self.build()?.topology;
        let d = PyDict::new(py);
        d.set_item("nodes", t.node_count())?;
        d.set_item("antennas", t.antenna_count())?;
        d.set_item("links", t.links().iter().map(|l| (l.tx, l.rx)).collect::<Vec<_>>())?;
        d.set_item("streams", t.streams().iter().map(|s| (s.source, s.sink)).collect::<Vec<_>>())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(nodes={}, v={:e}, slots={}, seed={})",
            self.file.topology.nodes, self.file.constants.v, self.file.run.slots, self.file.run.seed
        )
    }
}

fn metrics_dict<'py>(py: Python<'py>, m: &RunMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("v", m.v)?;
    d.set_item("slots", m.slots)?;
    d.set_item("seed", m.seed)?;
    d.set_item("avg_p_ap", m.avg_p_ap)?;
    d.set_item("avg_sum_backlog", m.avg_sum_backlog)?;
    d.set_item("max_backlog", m.max_backlog)?;
    d.set_item("battery_outages", m.battery_outages)?;
    d.set_item("low_battery_transmissions", m.low_battery_transmissions)?;
    d.set_item("projection_events", m.projection_events)?;
    d.set_item("drift_checks", m.drift_checks)?;
    d.set_item("drift_failures", m.drift_failures)?;
    d.set_item("min_drift_slack", m.min_drift_slack)?;
    d.set_item("gain_clips", m.gain_clips)?;
    d.set_item("battery_clips", m.battery_clips)?;
    d.set_item("eigen_fallbacks", m.eigen_fallbacks)?;
    Ok(d)
}

fn state_dict<'py>(py: Python<'py>, s: &NetworkState) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("slot", s.slot)?;
    d.set_item("backlog", s.backlog.clone())?;
    d.set_item("battery", s.battery.clone())?;
    Ok(d)
}

fn record_dict<'py>(py: Python<'py>, r: &SlotRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("slot", r.slot)?;
    d.set_item("p_ap", r.p_ap)?;
    d.set_item("lambda_max", r.lambda_max)?;
    d.set_item("weights", r.weights.clone())?;
    d.set_item("powers", r.powers.clone())?;
    d.set_item("rates", r.rates.clone())?;
    d.set_item("harvest", r.harvest.clone())?;
    d.set_item("sum_backlog", r.sum_backlog)?;
    d.set_item("min_battery", r.min_battery)?;
    d.set_item("drift_ok", r.drift.as_ref().map(|c| c.passed))?;
    Ok(d)
}

/// A closed loop stepped one slot at a time.
#[pyclass(name = "Simulation", module = "wpcn")]
struct PySimulation {
    inner: wpcn_core::Simulation,
}

#[pymethods]
impl PySimulation {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        let inner = wpcn_core::Simulation::new(config.build()?).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Advance one slot and return what was decided.
    fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let record = self.inner.step().map_err(py_err)?;
        record_dict(py, &record)
    }

    #[getter]
    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        state_dict(py, self.inner.state())
    }

    /// Lyapunov function of the current state.
    fn lyapunov(&self) -> f64 {
        let c = self.inner.config().constants.energy_scale();
        wpcn_core::lyapunov::lyapunov_value(self.inner.state(), c)
    }
}

/// Full run; returns the metrics dictionary.
#[pyfunction]
fn run<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.build()?;
    let m = py.detach(|| wpcn_core::run(&cfg)).map_err(py_err)?;
    metrics_dict(py, &m)
}

/// One paired-seed run per V, sorted by V (`run.v_list` when omitted).
#[pyfunction]
#[pyo3(signature = (config, v_list = None))]
fn sweep<'py>(py: Python<'py>, config: &PyConfig, v_list: Option<Vec<f64>>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = config.build()?;
    let values = v_list
        .or_else(|| config.file.run.v_list.clone())
        .ok_or_else(|| PyValueError::new_err("no V list given and run.v_list unset"))?;
    let rows = py.detach(|| wpcn_core::sweep_v(&cfg, &values)).map_err(py_err)?;
    rows.iter().map(|r| metrics_dict(py, &r.metrics)).collect()
}

/// Time-averaged EAP pattern on `grid` angles over [0, pi): `(metrics, [(theta, power)])`.
#[pyfunction]
#[pyo3(signature = (config, grid = 360))]
fn pattern<'py>(py: Python<'py>, config: &PyConfig, grid: usize) -> PyResult<(Bound<'py, PyDict>, Vec<(f64, f64)>)> {
    let cfg = config.build()?;
    let angles = angle_grid(grid);
    let (m, points) = py.detach(|| beam_pattern(&cfg, &angles)).map_err(py_err)?;
    Ok((metrics_dict(py, &m)?, points))
}

/// `B log2(1 + p|g|^2 / (N0 B))` with `|g|^2` clipped to `max_gain_sq`.
#[pyfunction]
fn link_capacity(power: f64, gain: Complex64, bandwidth: f64, noise_density: f64, max_gain_sq: f64) -> PyResult<f64> {
    let params = CapacityParams::new(bandwidth, noise_density, max_gain_sq).map_err(py_err)?;
    let (g, _) = params.clip_gain(gain);
    params.link_capacity(power, g).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (theta, antennas, spacing = 0.5))]
fn ula_steering(theta: f64, antennas: usize, spacing: f64) -> Vec<Complex64> {
    wpcn_core::channel::ula_steering(theta, antennas, spacing)
}

/// `(energy_scale, threshold)` for the given slope, peak power and alpha.
#[pyfunction]
#[pyo3(signature = (delta, p_max, alpha = 1.0 + std::f64::consts::SQRT_2))]
fn threshold_constants(delta: f64, p_max: f64, alpha: f64) -> (f64, f64) {
    (energy_scale(delta, alpha), congestion_threshold(delta, p_max, alpha))
}

#[pyfunction]
fn lyapunov_value(backlog: Vec<Vec<f64>>, battery: Vec<f64>, energy_scale: f64) -> PyResult<f64> {
    if backlog.len() != battery.len() {
        return Err(PyValueError::new_err("backlog and battery need one entry per node"));
    }
    let state = NetworkState { backlog, battery, slot: 0 };
    Ok(wpcn_core::lyapunov::lyapunov_value(&state, energy_scale))
}

/// Dominant eigenpair of a Hermitian PSD matrix given as rows: `(value, vector)`.
#[pyfunction]
fn max_eigvec(rows: Vec<Vec<Complex64>>) -> PyResult<(f64, Vec<Complex64>)> {
    let dim = rows.len();
    if dim == 0 || rows.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("expected a non-empty square matrix"));
    }
    let scale = rows.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    for i in 0..dim {
        for j in 0..=i {
            if (rows[i][j] - rows[j][i].conj()).norm() > 1e-12 * scale {
                return Err(PyValueError::new_err(format!("matrix is not Hermitian at ({i}, {j})")));
            }
        }
    }
    let h = HermitianMatrix::from_rows(dim, rows.into_iter().flatten().collect());
    let found = dominant(&h, &EigenOptions::default());
    Ok((found.value, found.vector))
}

#[pymodule]
fn wpcn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(pattern, m)?)?;
    m.add_function(wrap_pyfunction!(link_capacity, m)?)?;
    m.add_function(wrap_pyfunction!(ula_steering, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_constants, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov_value, m)?)?;
    m.add_function(wrap_pyfunction!(max_eigvec, m)?)?;
    m.add("BUNDLED_CONFIG", BUNDLED_FIVE_NODE)?;
    Ok(())
}
