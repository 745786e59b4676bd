use std::path::PathBuf;

use fronthaul::allocator::{allocate_delay_aware, allocate_queue_weighted, allocate_throughput_optimal, AllocatorConfig};
use fronthaul::channel::{compute_path_gains, generate_topology, sample_csi_for_slot, PathGains};
use fronthaul::config::ExperimentConfig;
use fronthaul::experiment::{emit_results, run_experiment as run_spec, ExperimentSpec, Mode, Outcome};
use fronthaul::phy::user_rates;
use fronthaul::priority::{calibrate_all, calibrate_per_flow, coupling_coefficients, priority_derivative, priority_value, PerFlowPriority};
use fronthaul::sim::Scheme;
use fronthaul::{Error, SystemParams};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    let msg = format!("[{}] {e}", e.category());
    match e.category() {
        "io" => PyIOError::new_err(msg),
        "calibration" | "numerical" => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| py_err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "SystemParams", frozen)]
struct PySystemParams {
    inner: SystemParams,
}

#[pymethods]
impl PySystemParams {
    /// Noise-normalized parameters from physical Watts and per-flow rates in bit/s.
    #[new]
    #[pyo3(signature = (power_w, noise_w, bandwidth_hz, slot_s, beta, gamma, lambda_bps))]
    fn new(
        power_w: f64,
        noise_w: f64,
        bandwidth_hz: f64,
        slot_s: f64,
        beta: Vec<f64>,
        gamma: Vec<f64>,
        lambda_bps: Vec<f64>,
    ) -> PyResult<Self> {
        let inner = SystemParams::from_physical(power_w, noise_w, bandwidth_hz, slot_s, beta, gamma, &lambda_bps).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Parameters of a configuration, with every flow at `lambda_bps`.
    #[staticmethod]
    #[pyo3(signature = (config = "", overrides = Vec::new(), lambda_bps = 0.0))]
    fn from_config(config: &str, overrides: Vec<String>, lambda_bps: f64) -> PyResult<Self> {
        let cfg = ExperimentConfig::from_toml_str(config, &overrides).map_err(py_err)?;
        let mut inner = cfg.system.system_params().map_err(py_err)?;
        inner.lambda.iter_mut().for_each(|l| *l = lambda_bps / inner.bandwidth_hz);
        Ok(Self { inner })
    }

    #[getter]
    fn power(&self) -> f64 {
        self.inner.power
    }

    #[getter]
    fn noise(&self) -> f64 {
        self.inner.noise
    }

    #[getter]
    fn bandwidth_hz(&self) -> f64 {
        self.inner.bandwidth_hz
    }

    #[getter]
    fn slot_s(&self) -> f64 {
        self.inner.slot_s
    }

    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.inner.beta.clone()
    }

    #[getter]
    fn gamma(&self) -> Vec<f64> {
        self.inner.gamma.clone()
    }

    /// Per-flow arrival rates in bit/s/Hz.
    #[getter]
    fn lambda_(&self) -> Vec<f64> {
        self.inner.lambda.clone()
    }

    #[getter]
    fn num_flows(&self) -> usize {
        self.inner.num_flows()
    }

    fn with_gamma_multiplier(&self, factor: f64) -> Self {
        Self {
            inner: self.inner.with_gamma_multiplier(factor),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemParams(flows={}, power={:e}, noise={})",
            self.inner.num_flows(),
            self.inner.power,
            self.inner.noise
        )
    }
}

#[pyclass(name = "PathGains", frozen)]
struct PyPathGains {
    inner: PathGains,
}

#[pymethods]
impl PyPathGains {
    #[new]
    #[pyo3(signature = (matrix, cross_scale = 1.0))]
    fn new(matrix: Vec<Vec<f64>>, cross_scale: f64) -> PyResult<Self> {
        Ok(Self {
            inner: PathGains::from_matrix(matrix, cross_scale).map_err(py_err)?,
        })
    }

    /// Gains of a random hexagonal layout.
    #[staticmethod]
    #[pyo3(signature = (num_cells = 7, cell_radius_m = 500.0, cross_scale = 1.0, seed = 1))]
    fn random_topology(num_cells: usize, cell_radius_m: f64, cross_scale: f64, seed: u64) -> PyResult<Self> {
        let topo = generate_topology(num_cells, cell_radius_m, seed);
        Ok(Self {
            inner: compute_path_gains(&topo, cross_scale).map_err(py_err)?,
        })
    }

    #[getter]
    fn matrix(&self) -> Vec<Vec<f64>> {
        self.inner.matrix().to_vec()
    }

    #[getter]
    fn cross_scale(&self) -> f64 {
        self.inner.cross_scale()
    }

    /// Coupling factors of the first-order priority correction.
    fn coupling(&self, noise: f64) -> Vec<f64> {
        coupling_coefficients(&self.inner, noise)
    }
}

#[pyclass(name = "PerFlowPriority", frozen)]
struct PyPriority {
    inner: PerFlowPriority,
}

#[pymethods]
impl PyPriority {
    /// Calibrates flow `k` whose home link has gain `l_kk`.
    #[staticmethod]
    fn calibrate(params: &PySystemParams, l_kk: f64, k: usize) -> PyResult<Self> {
        Ok(Self {
            inner: calibrate_per_flow(&params.inner, l_kk, k).map_err(py_err)?,
        })
    }

    /// `J_k′(q)` for a backlog in bit/Hz.
    fn derivative(&self, q: f64) -> PyResult<f64> {
        priority_derivative(&self.inner, q).map_err(py_err)
    }

    /// `J_k(q)` for a backlog in bit/Hz.
    fn value(&self, q: f64) -> PyResult<f64> {
        priority_value(&self.inner, q).map_err(py_err)
    }

    fn queue_at(&self, nu: f64) -> f64 {
        self.inner.queue_at(nu)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner)
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn d(&self) -> f64 {
        self.inner.d
    }

    #[getter]
    fn c_inf(&self) -> f64 {
        self.inner.c_inf
    }

    #[getter]
    fn phi(&self) -> f64 {
        self.inner.phi
    }

    #[getter]
    fn nu0(&self) -> f64 {
        self.inner.nu0
    }
}

/// One slot's allocation under `scheme`, with CSI drawn from the
/// `(seed, topology, slot)` sub-stream. Backlogs are in bits.
#[pyfunction]
#[pyo3(signature = (scheme, params, gains, q_bits, seed = 1, topology = 0, slot = 0))]
#[allow(clippy::too_many_arguments)]
fn allocate<'py>(
    py: Python<'py>,
    scheme: &str,
    params: &PySystemParams,
    gains: &PyPathGains,
    q_bits: Vec<f64>,
    seed: u64,
    topology: u64,
    slot: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let scheme: Scheme = scheme.parse().map_err(py_err)?;
    let p = &params.inner;
    if q_bits.len() != p.num_flows() || gains.inner.num_cells() != p.num_flows() {
        return Err(PyValueError::new_err("q_bits, gains and params must agree on the number of flows"));
    }
    let csi = sample_csi_for_slot(&gains.inner, seed, topology, slot).map_err(py_err)?;
    let cfg = AllocatorConfig::default();
    let outcome = match scheme {
        Scheme::DelayAware => {
            let priorities = calibrate_all(p, &gains.inner).map_err(py_err)?;
            let kappa = coupling_coefficients(&gains.inner, p.noise);
            let q_norm: Vec<f64> = q_bits.iter().map(|q| q / p.bandwidth_hz).collect();
            allocate_delay_aware(&csi, &q_norm, &priorities, &kappa, p, &cfg).map_err(py_err)?
        }
        Scheme::ThroughputOptimal => allocate_throughput_optimal(&csi, p, &cfg),
        Scheme::QueueWeighted => allocate_queue_weighted(&csi, &q_bits, p, &cfg),
    };
    let d = PyDict::new(py);
    d.set_item("capacities", outcome.alloc.capacities.clone())?;
    d.set_item("rates", user_rates(&csi, &outcome.alloc, p))?;
    d.set_item("weights", outcome.weights)?;
    d.set_item("converged", outcome.converged)?;
    d.set_item("sweeps", outcome.sweeps)?;
    Ok(d)
}

/// Runs `mode` (`single_run`, `sweep_arrival`, `sweep_capacity`,
/// `oracle_gap`, `unit_report`) and returns its JSON summary as a dict;
/// files are written when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (mode, config = "", overrides = Vec::new(), out_dir = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    mode: &str,
    config: &str,
    overrides: Vec<String>,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mode: Mode = mode.parse().map_err(py_err)?;
    let cfg = ExperimentConfig::from_toml_str(config, &overrides).map_err(py_err)?;
    let spec = ExperimentSpec::new(mode, cfg).map_err(py_err)?;
    let outcome = py.detach(|| run_spec(&spec)).map_err(py_err)?;
    if let Some(dir) = out_dir {
        emit_results(&outcome, &dir).map_err(py_err)?;
    }
    match &outcome {
        Outcome::Sweep(o) => json_to_py(py, o),
        Outcome::Oracle(o) => json_to_py(py, o),
        Outcome::Units(o) => json_to_py(py, o),
    }
}

/// The resolved default configuration as TOML.
#[pyfunction]
fn default_config() -> String {
    ExperimentConfig::default().to_toml_string()
}

#[pyfunction]
fn exp_integral_e1(z: f64) -> PyResult<f64> {
    fronthaul::numerics::exp_integral_e1(z).map_err(py_err)
}

#[pyfunction]
fn scaled_exp_integral_e1(z: f64) -> PyResult<f64> {
    fronthaul::numerics::scaled_exp_integral_e1(z).map_err(py_err)
}

/// `e^a E1(a)/ln2` in bit/s/Hz.
#[pyfunction]
fn ergodic_capacity(a: f64) -> PyResult<f64> {
    if a.is_nan() || a <= 0.0 {
        return Err(PyValueError::new_err("a must be > 0"));
    }
    Ok(fronthaul::priority::ergodic_capacity(a))
}

#[pyfunction]
fn dbm_to_watts(dbm: f64) -> f64 {
    fronthaul::params::dbm_to_watts(dbm)
}

#[pyfunction]
fn watts_to_dbm(w: f64) -> f64 {
    fronthaul::params::watts_to_dbm(w)
}

#[pymodule]
fn fronthaul_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemParams>()?;
    m.add_class::<PyPathGains>()?;
    m.add_class::<PyPriority>()?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(exp_integral_e1, m)?)?;
    m.add_function(wrap_pyfunction!(scaled_exp_integral_e1, m)?)?;
    m.add_function(wrap_pyfunction!(ergodic_capacity, m)?)?;
    m.add_function(wrap_pyfunction!(dbm_to_watts, m)?)?;
    m.add_function(wrap_pyfunction!(watts_to_dbm, m)?)?;
    m.add("SCHEMES", Scheme::ALL.iter().map(|s| s.as_str()).collect::<Vec<_>>())?;
    Ok(())
}
