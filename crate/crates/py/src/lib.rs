//! Python bindings for the wave HJB solvers.

use hjb_wave::bsde::{solve_bsde, BsdeOptions};
use hjb_wave::cli::{self, Subcommand};
use hjb_wave::config::ExperimentConfig;
use hjb_wave::control::{self, ControlProblem, CostReport, Policy};
use hjb_wave::hamiltonian::HamiltonianSpec;
use hjb_wave::kolmogorov::ValueField;
use hjb_wave::rng::SeedRecord;
use hjb_wave::semigroup::smoothing_constant as smoothing;
use hjb_wave::spectral_ou::{covariance_block as block, ModeBasis};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::sync::Arc;

fn err(e: hjb_wave::Error) -> PyErr {
    match e {
        hjb_wave::Error::InvalidArgument(_) | hjb_wave::Error::Config(_) | hjb_wave::Error::Hypothesis(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Covariance block `Q_σ` of mode `k` as a 2×2 nested list.
#[pyfunction]
fn covariance_block(k: usize, sigma: f64) -> PyResult<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(PyValueError::new_err("modes are 1-based"));
    }
    let q = block(k as f64 * std::f64::consts::PI, sigma).0;
    Ok(q.iter().map(|r| r.to_vec()).collect())
}

/// `sup_k ‖Q_σ^{-1/2} e^{σA} B‖` over the first `n_modes` modes.
#[pyfunction]
fn smoothing_constant(sigma: f64, n_modes: usize) -> PyResult<f64> {
    let basis = ModeBasis::new(n_modes).map_err(err)?;
    smoothing(sigma, &basis).map_err(err)
}

/// Power Hamiltonian `h(z) = inf_u { weight |u|^q + ⟨z, u⟩ }`.
#[pyclass(frozen)]
struct Hamiltonian {
    spec: HamiltonianSpec,
}

#[pymethods]
impl Hamiltonian {
    #[new]
    #[pyo3(signature = (q, weight = 1.0))]
    fn new(q: f64, weight: f64) -> PyResult<Self> {
        let spec = HamiltonianSpec::new(
            hjb_wave::hamiltonian::ControlSet::Full,
            hjb_wave::hamiltonian::ControlCost::NormPower { q, weight },
            Vec::new(),
            true,
        )
        .map_err(err)?;
        Ok(Self { spec })
    }

    fn value(&self, z: Vec<f64>) -> PyResult<f64> {
        self.spec.value(&z).map_err(err)
    }

    fn optimal_control(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.spec.optimal_control(&z).map_err(err)
    }

    #[getter]
    fn gamma_z(&self) -> f64 {
        self.spec.gamma_z()
    }
}

/// Value function and B-gradient on a time grid.
#[pyclass(name = "ValueField", frozen)]
struct PyValueField {
    inner: Arc<ValueField>,
}

#[pymethods]
impl PyValueField {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: Arc::new(ValueField::from_json(text).map_err(err)?) })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn value(&self, t: f64, x: Vec<f64>) -> PyResult<f64> {
        self.check(&x)?;
        Ok(self.inner.value(t, &x))
    }

    fn bgrad(&self, t: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        let mut out = vec![0.0; self.inner.n_modes];
        self.inner.bgrad(t, &x, &mut out);
        Ok(out)
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.grid.clone()
    }
}

impl PyValueField {
    fn check(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != 2 * self.inner.n_modes {
            return Err(PyValueError::new_err(format!("state needs {} coordinates", 2 * self.inner.n_modes)));
        }
        Ok(())
    }
}

fn cost_dict<'py>(py: Python<'py>, r: &CostReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mean", r.mean)?;
    d.set_item("std_error", r.std_error)?;
    d.set_item("paths", r.paths)?;
    d.set_item("state_cost", r.state_cost)?;
    d.set_item("control_cost", r.control_cost)?;
    d.set_item("terminal_cost", r.terminal_cost)?;
    d.set_item("q_moment", r.q_moment)?;
    Ok(d)
}

/// Wave control problem assembled from TOML configuration text.
#[pyclass(name = "WaveProblem", frozen)]
struct PyWaveProblem {
    config: ExperimentConfig,
    inner: ControlProblem,
}

#[pymethods]
impl PyWaveProblem {
    #[new]
    fn new(toml: &str) -> PyResult<Self> {
        let config = ExperimentConfig::from_toml(toml).map_err(err)?;
        let inner = control::assemble_wave_problem(&config).map_err(err)?;
        Ok(Self { config, inner })
    }

    #[getter]
    fn n_modes(&self) -> usize {
        self.inner.n_modes()
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.grid.clone()
    }

    #[getter]
    fn x0(&self) -> Vec<f64> {
        self.inner.x0.to_vec()
    }

    /// Terminal states of `n_paths` uncontrolled trajectories.
    fn simulate_terminal(&self, py: Python<'_>, n_paths: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let paths = py.detach(|| self.inner.simulate(n_paths, SeedRecord::new(seed))).map_err(err)?;
        let m = paths.n_steps();
        Ok((0..n_paths).map(|p| paths.state(p, m).to_vec()).collect())
    }

    /// Regression BSDE solve; returns `(y0, std_error, value_field)`.
    #[pyo3(signature = (n_paths, seed = None))]
    fn solve_bsde(&self, py: Python<'_>, n_paths: usize, seed: Option<u64>) -> PyResult<(f64, f64, PyValueField)> {
        let seed = seed.unwrap_or(self.config.seed);
        let opts = BsdeOptions {
            basis: self.config.basis(),
            truncation: self.config.solver.truncation,
            picard_iters: self.config.solver.picard_iters,
        };
        let sol = py
            .detach(|| {
                let paths = self.inner.simulate(n_paths, SeedRecord::new(seed))?;
                solve_bsde(&paths, &*self.inner.driver(), &*self.inner.phi, &opts)
            })
            .map_err(err)?;
        let field = ValueField::from_bsde(&sol).map_err(err)?;
        Ok((sol.y0.value, sol.y0.std_error, PyValueField { inner: Arc::new(field) }))
    }

    /// Cost of the feedback `u = scale · γ(∇^B v)` as a dict.
    #[pyo3(signature = (field, n_paths, seed, scale = 1.0))]
    fn feedback_cost<'py>(
        &self,
        py: Python<'py>,
        field: &PyValueField,
        n_paths: usize,
        seed: u64,
        scale: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let policy = Policy::Feedback { field: field.inner.clone(), scale };
        let r = py.detach(|| control::evaluate_cost(&self.inner, &policy, n_paths, SeedRecord::new(seed))).map_err(err)?;
        cost_dict(py, &r)
    }

    /// Cost of the zero control as a dict.
    fn zero_cost<'py>(&self, py: Python<'py>, n_paths: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let r = py.detach(|| control::evaluate_cost(&self.inner, &Policy::Zero, n_paths, SeedRecord::new(seed))).map_err(err)?;
        cost_dict(py, &r)
    }

    /// Cole–Hopf Monte Carlo value `(v, std_error)` for quadratic costs.
    fn cole_hopf_value(&self, py: Python<'_>, n_paths: usize, seed: u64) -> PyResult<(f64, f64)> {
        let e = py.detach(|| control::cole_hopf_value(&self.inner, n_paths, SeedRecord::new(seed))).map_err(err)?;
        Ok((e.value, e.std_error))
    }
}

/// Runs a pipeline in memory; returns `(passed, {artifact name: text})`.
#[pyfunction]
fn run_pipeline<'py>(py: Python<'py>, subcommand: &str, toml: &str) -> PyResult<(bool, Bound<'py, PyDict>)> {
    let cmd: Subcommand = subcommand.parse().map_err(err)?;
    let (config, _) = cli::load_config(toml, None).map_err(err)?;
    let outcome = py.detach(|| cli::run_pipeline(cmd, &config)).map_err(err)?;
    let files = PyDict::new(py);
    for a in &outcome.artifacts {
        files.set_item(&a.name, String::from_utf8_lossy(&a.bytes))?;
    }
    Ok((outcome.passed(), files))
}

#[pymodule]
fn hjb_wave_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(covariance_block, m)?)?;
    m.add_function(wrap_pyfunction!(smoothing_constant, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_class::<Hamiltonian>()?;
    m.add_class::<PyValueField>()?;
    m.add_class::<PyWaveProblem>()?;
    Ok(())
}
