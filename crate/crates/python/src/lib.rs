//! Python bindings: states, models, the experiment runners and the fitter.

use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use catzeno::config::{resolve, ResolvedConfig};
use catzeno::evolve::{evolve, steady_state, SolverConfig};
use catzeno::experiment::{self as exp, ExperimentConfig};
use catzeno::fock::{cat_state, coherent_state, parity, DensityMatrix, StateVector};
use catzeno::model::LindbladModel;
use catzeno::tomography::{self, Normalization};
use catzeno::{units, validation, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        e if e.is_config_error() => PyValueError::new_err(e.to_string()),
        Error::InvalidParameter(_) | Error::InvalidDimension { .. } | Error::TruncationGuard { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "DensityMatrix", module = "catzeno_py", from_py_object)]
#[derive(Clone)]
pub struct PyDensityMatrix {
    inner: DensityMatrix,
}

#[pymethods]
impl PyDensityMatrix {
    #[staticmethod]
    fn fock(n: usize, dim: usize) -> PyResult<Self> {
        let psi = StateVector::fock(n, dim).map_err(py_err)?;
        Ok(Self { inner: DensityMatrix::pure(&psi) })
    }

    #[staticmethod]
    fn coherent(alpha: Complex64, dim: usize) -> PyResult<Self> {
        let psi = coherent_state(alpha, dim).map_err(py_err)?;
        Ok(Self { inner: DensityMatrix::pure(&psi) })
    }

    /// `N(|alpha> + e^{i phi}|-alpha>)`.
    #[staticmethod]
    #[pyo3(signature = (alpha, phi = 0.0, dim = 30))]
    fn cat(alpha: Complex64, phi: f64, dim: usize) -> PyResult<Self> {
        let psi = cat_state(alpha, phi, dim).map_err(py_err)?;
        Ok(Self { inner: DensityMatrix::pure(&psi) })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.spec().total_dim()
    }

    #[getter]
    fn mode_dims(&self) -> Vec<usize> {
        self.inner.spec().mode_dims().to_vec()
    }

    fn trace(&self) -> Complex64 {
        self.inner.trace()
    }

    fn purity(&self) -> f64 {
        self.inner.purity()
    }

    fn trace_distance(&self, other: &PyDensityMatrix) -> PyResult<f64> {
        self.inner.trace_distance(&other.inner).map_err(py_err)
    }

    /// Reduced state of mode `keep`.
    fn partial_trace(&self, keep: usize) -> PyResult<Self> {
        Ok(Self { inner: self.inner.partial_trace(keep).map_err(py_err)? })
    }

    /// Expectation of the photon-number parity on a single mode.
    fn parity(&self) -> PyResult<f64> {
        let p = parity(self.dim()).map_err(py_err)?;
        Ok((p.matrix() * self.inner.matrix()).trace().re)
    }

    /// Row-major nested lists of complex entries.
    fn to_list(&self) -> Vec<Vec<Complex64>> {
        let m = self.inner.matrix();
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
    }

    fn __repr__(&self) -> String {
        format!("DensityMatrix(mode_dims={:?})", self.inner.spec().mode_dims())
    }
}

/// A resolved configuration; the same keys as the TOML files.
#[pyclass(name = "Config", module = "catzeno_py")]
pub struct PyConfig {
    resolved: ResolvedConfig,
    cfg: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (preset = None, overrides = Vec::new()))]
    fn new(preset: Option<&str>, overrides: Vec<String>) -> PyResult<Self> {
        let resolved = resolve(None, preset, &overrides).map_err(py_err)?;
        let cfg = resolved.experiment().map_err(py_err)?;
        Ok(Self { resolved, cfg })
    }

    /// Applies one `key=value` override.
    fn set(&mut self, assignment: &str) -> PyResult<()> {
        let mut r = self.resolved.clone();
        r.set(assignment).map_err(py_err)?;
        self.cfg = r.experiment().map_err(py_err)?;
        self.resolved = r;
        Ok(())
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.resolved.table).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Storage amplitude `sqrt(nbar)`.
    #[staticmethod]
    fn alpha(nbar: f64) -> Complex64 {
        ExperimentConfig::alpha(nbar)
    }

    #[getter]
    fn eps0(&self) -> f64 {
        self.cfg.eps0
    }

    #[getter]
    fn kappa2(&self) -> f64 {
        self.cfg.device.kappa2
    }

    #[getter]
    fn kappa1(&self) -> f64 {
        self.cfg.device.kappa1
    }
}

#[pyclass(name = "LindbladModel", module = "catzeno_py")]
pub struct PyLindbladModel {
    inner: LindbladModel,
    solver: SolverConfig,
}

#[pymethods]
impl PyLindbladModel {
    /// Single-mode model with the eliminated two-photon dissipator.
    #[staticmethod]
    #[pyo3(signature = (config, nbar, eps_multiplier = 0.0))]
    fn reduced(config: &PyConfig, nbar: f64, eps_multiplier: f64) -> PyResult<Self> {
        let c = &config.cfg;
        let inner = c
            .build_model(exp::ModelKind::Reduced, nbar, eps_multiplier * c.eps0, c.device.n_th)
            .map_err(py_err)?;
        Ok(Self { inner, solver: c.numerics.clone() })
    }

    /// Storage and reservoir with the pumped exchange.
    #[staticmethod]
    #[pyo3(signature = (config, nbar, eps_multiplier = 0.0, n_th = None))]
    fn full(config: &PyConfig, nbar: f64, eps_multiplier: f64, n_th: Option<f64>) -> PyResult<Self> {
        let c = &config.cfg;
        let inner = c
            .build_model(
                exp::ModelKind::Full,
                nbar,
                eps_multiplier * c.eps0,
                n_th.unwrap_or(c.device.n_th),
            )
            .map_err(py_err)?;
        Ok(Self { inner, solver: c.numerics.clone() })
    }

    #[getter]
    fn mode_dims(&self) -> Vec<usize> {
        self.inner.spec().mode_dims().to_vec()
    }

    /// States at each of `times` (us).
    fn evolve(&self, py: Python<'_>, rho0: &PyDensityMatrix, times: Vec<f64>) -> PyResult<Vec<PyDensityMatrix>> {
        let solver = SolverConfig { store_states: true, ..self.solver.clone() };
        let r = py
            .detach(|| evolve(&self.inner, &rho0.inner, &times, &solver, &[]))
            .map_err(py_err)?;
        Ok(r.states
            .unwrap_or_default()
            .into_iter()
            .map(|inner| PyDensityMatrix { inner })
            .collect())
    }

    /// Steady state reached from `initial` (vacuum when omitted).
    #[pyo3(signature = (initial = None, t_max = 200.0))]
    fn steady_state(&self, py: Python<'_>, initial: Option<&PyDensityMatrix>, t_max: f64) -> PyResult<PyDensityMatrix> {
        let init = initial.map(|r| r.inner.clone());
        let ss = py
            .detach(|| steady_state(&self.inner, init.as_ref(), t_max))
            .map_err(py_err)?;
        let state = ss
            .state()
            .cloned()
            .ok_or_else(|| PyRuntimeError::new_err("degenerate kernel: pass an initial state"))?;
        Ok(PyDensityMatrix { inner: state })
    }
}

fn norm_of(name: &str) -> PyResult<Normalization> {
    match name {
        "quasi" | "quasi_probability" => Ok(Normalization::QuasiProbability),
        "parity" => Ok(Normalization::Parity),
        other => Err(PyValueError::new_err(format!("unknown normalization `{other}`"))),
    }
}

#[pyfunction]
#[pyo3(signature = (rho, beta, normalization = "quasi"))]
fn wigner(rho: &PyDensityMatrix, beta: Complex64, normalization: &str) -> PyResult<f64> {
    tomography::wigner_point(&rho.inner, beta, norm_of(normalization)?).map_err(py_err)
}

/// Bloch vector `(x, y, z, leakage)` in the cat basis of `alpha`.
#[pyfunction]
fn bloch_vector(rho: &PyDensityMatrix, alpha: Complex64) -> PyResult<(f64, f64, f64, f64)> {
    let basis = tomography::logical_basis(alpha, rho.inner.spec().total_dim()).map_err(py_err)?;
    let b = tomography::bloch_vector(&rho.inner, &basis).map_err(py_err)?;
    Ok((b.x, b.y, b.z, b.leakage))
}

#[pyfunction]
fn phase_flip_leakage(rho: &PyDensityMatrix, alpha: Complex64) -> PyResult<f64> {
    tomography::phase_flip_leakage(&rho.inner, alpha).map_err(py_err)
}

#[pyfunction]
fn fit_decaying_cosine<'py>(py: Python<'py>, times: Vec<f64>, values: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let f = catzeno::fit::fit_decaying_cosine(&times, &values).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("omega", f.omega)?;
    d.set_item("tau", f.tau)?;
    d.set_item("amplitude", f.amplitude)?;
    d.set_item("offset", f.offset)?;
    d.set_item("phase", f.phase)?;
    d.set_item("residual_rms", f.residual_rms)?;
    d.set_item("converged", f.converged)?;
    Ok(d)
}

/// One dict per `(nbar, multiplier)` with `times` and `parity`.
#[pyfunction]
fn run_parity_oscillation<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyList>> {
    let runs = py.detach(|| exp::run_parity_oscillation(&config.cfg)).map_err(py_err)?;
    let out = PyList::empty(py);
    for r in runs {
        let d = PyDict::new(py);
        d.set_item("nbar", r.nbar)?;
        d.set_item("multiplier", r.multiplier)?;
        d.set_item("times", r.times)?;
        d.set_item("parity", r.parity)?;
        out.append(d)?;
    }
    Ok(out)
}

/// Rows of `(nbar, multiplier, omega, tau, tau_ratio)`.
#[pyfunction]
fn run_rabi_sweep(py: Python<'_>, config: &PyConfig) -> PyResult<Vec<(f64, f64, f64, f64, f64)>> {
    let (rows, _) = py.detach(|| exp::run_rabi_sweep(&config.cfg)).map_err(py_err)?;
    Ok(rows
        .iter()
        .map(|r| (r.nbar, r.multiplier, r.omega, r.tau, r.tau_ratio))
        .collect())
}

#[pyfunction]
fn run_cardinal_gate<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let rep = py.detach(|| exp::run_cardinal_gate(&config.cfg)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("gate_time", rep.gate_time)?;
    d.set_item("zero_crossing", rep.zero_crossing)?;
    let pts = PyList::empty(py);
    for p in &rep.points {
        let e = PyDict::new(py);
        e.set_item("label", &p.label)?;
        e.set_item("ideal", p.ideal.to_vec())?;
        e.set_item("identity", p.identity.as_array().to_vec())?;
        e.set_item("gate", p.gate.as_array().to_vec())?;
        e.set_item("distance", p.distance)?;
        pts.append(e)?;
    }
    d.set_item("points", pts)?;
    Ok(d)
}

/// One dict per `(nbar, n_th)` with `times`, `leakage` and `rate`.
#[pyfunction]
fn run_phase_flip<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyList>> {
    let curves = py.detach(|| exp::run_phase_flip(&config.cfg)).map_err(py_err)?;
    let out = PyList::empty(py);
    for c in curves {
        let d = PyDict::new(py);
        d.set_item("nbar", c.nbar)?;
        d.set_item("n_th", c.n_th)?;
        d.set_item("times", c.times)?;
        d.set_item("leakage", c.leakage)?;
        d.set_item("rate", c.rate)?;
        out.append(d)?;
    }
    Ok(out)
}

/// `(amplitude_scales, detunings, vacuum_overlap rows)`.
#[pyfunction]
fn run_frequency_matching_sweep(py: Python<'_>, config: &PyConfig) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    let m = py.detach(|| exp::run_frequency_matching_sweep(&config.cfg)).map_err(py_err)?;
    let rows = m
        .vacuum_overlap
        .chunks(m.detunings.len().max(1))
        .map(<[f64]>::to_vec)
        .collect();
    Ok((m.amplitude_scales, m.detunings, rows))
}

/// `(name, passed, worst, tolerance)` for each self-check.
#[pyfunction]
#[pyo3(signature = (seed = 1))]
fn validate(py: Python<'_>, seed: u64) -> PyResult<Vec<(String, bool, f64, f64)>> {
    let checks = py.detach(|| validation::run_all(seed)).map_err(py_err)?;
    Ok(checks
        .into_iter()
        .map(|c| (c.name, c.passed, c.worst, c.tolerance))
        .collect())
}

#[pyfunction]
fn mhz_to_rad_per_us(f_mhz: f64) -> f64 {
    units::mhz_to_rad_per_us(f_mhz)
}

#[pyfunction]
fn rad_per_us_to_mhz(omega: f64) -> f64 {
    units::rad_per_us_to_mhz(omega)
}

#[pymodule]
fn catzeno_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDensityMatrix>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyLindbladModel>()?;
    m.add_function(wrap_pyfunction!(wigner, m)?)?;
    m.add_function(wrap_pyfunction!(bloch_vector, m)?)?;
    m.add_function(wrap_pyfunction!(phase_flip_leakage, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decaying_cosine, m)?)?;
    m.add_function(wrap_pyfunction!(run_parity_oscillation, m)?)?;
    m.add_function(wrap_pyfunction!(run_rabi_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_cardinal_gate, m)?)?;
    m.add_function(wrap_pyfunction!(run_phase_flip, m)?)?;
    m.add_function(wrap_pyfunction!(run_frequency_matching_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(mhz_to_rad_per_us, m)?)?;
    m.add_function(wrap_pyfunction!(rad_per_us_to_mhz, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
