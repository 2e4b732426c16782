//! Python bindings. Matrices cross the boundary as lists of rows.

use contradice::envs::{random_mdp, trap_suite};
use contradice::experiment::{run_all, summarize, sweep, sweep_csv, ExperimentConfig, SweepAxis};
use contradice::mdp::{occupancy_of_policy, policy_return, soft_value_iteration};
use contradice::objectives::{f_objective, f_reformulated, soft_value_closed_form, Mutation};
use contradice::oracle::{oracle_min_f, run_all_probes};
use contradice::{Error, OccupancyMeasure, Policy, TabularMdp};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e.root() {
        Error::Invalid(_) | Error::Shape(_) | Error::Config(_) | Error::Support { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("expected a non-empty rectangular list of rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn occupancy(rows: &[Vec<f64>]) -> PyResult<OccupancyMeasure> {
    OccupancyMeasure::new(to_matrix(rows)?).map_err(py_err)
}

/// A finite discounted MDP.
#[pyclass(name = "TabularMdp", module = "contradice_py", frozen)]
struct PyMdp {
    inner: TabularMdp,
}

#[pymethods]
impl PyMdp {
    /// One of the trap gridworlds: checker, corridor or diagonal.
    #[staticmethod]
    fn gridworld(layout: &str) -> PyResult<Self> {
        let (_, spec) = trap_suite()
            .into_iter()
            .find(|(name, _)| name == layout)
            .ok_or_else(|| PyValueError::new_err(format!("unknown layout `{layout}`")))?;
        Ok(PyMdp { inner: spec.build().map_err(py_err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (n_states, n_actions, gamma=0.9, seed=0))]
    fn random(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> PyResult<Self> {
        Ok(PyMdp { inner: random_mdp(n_states, n_actions, gamma, seed).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyMdp { inner: TabularMdp::from_json(text).map_err(py_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn reward(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.reward)
    }

    fn occupancy(&self, policy: &PyPolicy) -> PyResult<Vec<Vec<f64>>> {
        let d = occupancy_of_policy(&self.inner, &policy.inner).map_err(py_err)?;
        Ok(to_rows(d.matrix()))
    }

    fn policy_return(&self, policy: &PyPolicy) -> PyResult<f64> {
        policy_return(&self.inner, &policy.inner).map_err(py_err)
    }

    /// Soft-optimal policy for `reward` at temperature `beta`, uniform reference.
    fn soft_optimal_policy(&self, reward: Vec<Vec<f64>>, beta: f64) -> PyResult<PyPolicy> {
        let solution = soft_value_iteration(&self.inner, &to_matrix(&reward)?, beta).map_err(py_err)?;
        Ok(PyPolicy { inner: solution.policy })
    }

    fn __repr__(&self) -> String {
        format!("TabularMdp(n_states={}, n_actions={}, gamma={})", self.inner.n_states(), self.inner.n_actions(), self.inner.gamma)
    }
}

/// Row-stochastic policy `π(a|s)`.
#[pyclass(name = "Policy", module = "contradice_py", frozen)]
struct PyPolicy {
    inner: Policy,
}

#[pymethods]
impl PyPolicy {
    #[new]
    fn new(probs: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyPolicy { inner: Policy::new(to_matrix(&probs)?).map_err(py_err)? })
    }

    #[staticmethod]
    fn uniform(n_states: usize, n_actions: usize) -> Self {
        PyPolicy { inner: Policy::uniform(n_states, n_actions) }
    }

    #[getter]
    fn probs(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.probs())
    }

    fn max_abs_diff(&self, other: &PyPolicy) -> f64 {
        self.inner.max_abs_diff(&other.inner)
    }
}

/// `KL(d‖d_g) − α KL(d‖d_b)`.
#[pyfunction]
fn f_value(d: Vec<Vec<f64>>, d_g: Vec<Vec<f64>>, d_b: Vec<Vec<f64>>, alpha: f64) -> PyResult<f64> {
    f_objective(&to_matrix(&d)?, &to_matrix(&d_g)?, &to_matrix(&d_b)?, alpha).map_err(py_err)
}

/// `(1−α) KL(d‖d_u) − E_d[Ψ]`.
#[pyfunction]
fn f_value_reformulated(d: Vec<Vec<f64>>, d_u: Vec<Vec<f64>>, psi: Vec<Vec<f64>>, alpha: f64) -> PyResult<f64> {
    f_reformulated(&to_matrix(&d)?, &to_matrix(&d_u)?, &to_matrix(&psi)?, alpha).map_err(py_err)
}

/// `β log Σ_a μ(a|s) exp(q(s,a)/β)` per state.
#[pyfunction]
fn soft_value(q: Vec<Vec<f64>>, mu: &PyPolicy, beta: f64) -> PyResult<Vec<f64>> {
    Ok(soft_value_closed_form(&to_matrix(&q)?, &mu.inner, beta).iter().copied().collect())
}

/// Minimizer of `f` over the occupancies of `mdp`, as `(d, value)`.
#[pyfunction]
#[pyo3(signature = (mdp, d_g, d_b, alpha, iters=10_000))]
fn min_f(mdp: &PyMdp, d_g: Vec<Vec<f64>>, d_b: Vec<Vec<f64>>, alpha: f64, iters: usize) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let solution = oracle_min_f(&mdp.inner, &occupancy(&d_g)?, &occupancy(&d_b)?, alpha, iters).map_err(py_err)?;
    Ok((to_rows(solution.d.matrix()), solution.value))
}

/// Runs every oracle probe; returns the reports as a JSON string.
#[pyfunction]
#[pyo3(signature = (seed=0, mutation="none"))]
fn verify(py: Python<'_>, seed: u64, mutation: &str) -> PyResult<String> {
    let mutation: Mutation = mutation.parse().map_err(py_err)?;
    let reports = py.detach(|| run_all_probes(seed, mutation));
    serde_json::to_string(&reports).map_err(json_err)
}

/// Trains every task and seed of a TOML config; returns the run result as JSON.
#[pyfunction]
#[pyo3(signature = (config_toml=""))]
fn train(py: Python<'_>, config_toml: &str) -> PyResult<String> {
    let config = ExperimentConfig::from_toml_str(config_toml).map_err(py_err)?;
    let result = py.detach(|| {
        let start = std::time::Instant::now();
        run_all(&config, None).map(|runs| summarize(&config, &runs, Vec::new(), start.elapsed().as_secs_f64()))
    });
    serde_json::to_string(&result.map_err(py_err)?).map_err(json_err)
}

/// Sweeps one axis; returns tidy CSV text.
#[pyfunction]
#[pyo3(signature = (axis, config_toml=""))]
fn sweep_axis(py: Python<'_>, axis: &str, config_toml: &str) -> PyResult<String> {
    let axis: SweepAxis = axis.parse().map_err(py_err)?;
    let config = ExperimentConfig::from_toml_str(config_toml).map_err(py_err)?;
    let rows = py.detach(|| sweep(&config, axis)).map_err(py_err)?;
    Ok(sweep_csv(&rows))
}

#[pymodule]
fn contradice_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMdp>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(f_value, m)?)?;
    m.add_function(wrap_pyfunction!(f_value_reformulated, m)?)?;
    m.add_function(wrap_pyfunction!(soft_value, m)?)?;
    m.add_function(wrap_pyfunction!(min_f, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_axis, m)?)?;
    Ok(())
}
