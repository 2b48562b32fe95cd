//! Python bindings: build a problem family, run the solver once, and
//! evaluate the resulting parameterized solution at any parameter value.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use infgmres::engine::{self, EllPolicy, SolverConfig, TRACE_HEADER};
use infgmres::gallery;
use infgmres::inner::{InnerConfig, InnerKind, TolPolicy};
use infgmres::{Error, ParameterizedSolution, TaylorMatrixFunction};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: serde::de::DeserializeOwned>(what: &str, value: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} '{value}'")))
}

/// A parameterized family `A(mu)` together with its right-hand side.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    family: TaylorMatrixFunction,
    rhs: Vec<f64>,
}

#[pymethods]
impl PyProblem {
    #[staticmethod]
    #[pyo3(signature = (n, bandwidth = gallery::DEFAULT_DELAY_BANDWIDTH, seed = 0))]
    fn time_delay(n: usize, bandwidth: usize, seed: u64) -> PyResult<Self> {
        if n < 2 {
            return Err(PyValueError::new_err("n must be at least 2"));
        }
        let (family, rhs) = gallery::time_delay(n, bandwidth, seed);
        Ok(Self { family, rhs })
    }

    #[staticmethod]
    #[pyo3(signature = (grid, alpha = gallery::DEFAULT_HELMHOLTZ_ALPHA))]
    fn helmholtz_fd(grid: usize, alpha: f64) -> PyResult<Self> {
        if grid < 8 {
            return Err(PyValueError::new_err("grid must be at least 8"));
        }
        let (family, rhs) = gallery::helmholtz_fd(grid, alpha);
        Ok(Self { family, rhs })
    }

    #[staticmethod]
    fn from_manifest(path: PathBuf) -> PyResult<Self> {
        let (family, rhs) = gallery::from_manifest(&path).map_err(to_py)?;
        Ok(Self { family, rhs })
    }

    /// Same family with the parameter scaled by `s`; scales compose.
    fn rescale(&self, s: f64) -> PyResult<Self> {
        Ok(Self {
            family: self.family.rescale(s).map_err(to_py)?,
            rhs: self.rhs.clone(),
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.family.dim()
    }

    #[getter]
    fn scale(&self) -> f64 {
        self.family.scale()
    }

    #[getter]
    fn rhs(&self) -> Vec<f64> {
        self.rhs.clone()
    }

    /// Nonzeros `(row, col, value)` of the scaled Taylor coefficient `ell`.
    fn coefficient(&self, ell: usize) -> Vec<(usize, usize, f64)> {
        self.family.coeff(ell).triplets().collect()
    }

    /// `||A(mu) x - b|| / ||b||`.
    fn relative_residual(&self, mu: f64, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.rhs.len() {
            return Err(PyValueError::new_err(format!("x has length {}, expected {}", x.len(), self.rhs.len())));
        }
        let a = self.family.eval(mu).map_err(to_py)?;
        Ok(infgmres::sparse::residual_norm(&a, &x, &self.rhs) / infgmres::sparse::norm(&self.rhs))
    }

    fn __repr__(&self) -> String {
        format!("Problem(dim={}, scale={})", self.family.dim(), self.family.scale())
    }
}

/// The reusable approximation `x(mu)` produced by one run.
#[pyclass(name = "Solution", frozen)]
struct PySolution {
    inner: ParameterizedSolution,
}

#[pymethods]
impl PySolution {
    fn evaluate(&self, mu: f64) -> PyResult<Vec<f64>> {
        self.inner.evaluate(mu).map_err(to_py)
    }

    fn true_relative_residual(&self, mu: f64, problem: &PyProblem) -> PyResult<f64> {
        self.inner
            .true_relative_residual(mu, &problem.family, &problem.rhs)
            .map_err(to_py)
    }

    /// `(mu, rel_res)` pairs in input order; failed rows give `None`.
    fn sweep(&self, py: Python<'_>, mus: Vec<f64>, problem: &PyProblem) -> Vec<(f64, Option<f64>)> {
        let rows = py.detach(|| self.inner.sweep(&mus, &problem.family, &problem.rhs));
        rows.into_iter().map(|r| (r.mu, r.rel_res.ok())).collect()
    }

    fn prefix(&self, j: usize) -> PyResult<Self> {
        if j == 0 || j > self.inner.j {
            return Err(PyValueError::new_err(format!("prefix length must lie in 1..={}", self.inner.j)));
        }
        Ok(Self {
            inner: self.inner.prefix(j),
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ParameterizedSolution::from_json(text).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: ParameterizedSolution::load(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn j(&self) -> usize {
        self.inner.j
    }

    #[getter]
    fn s(&self) -> f64 {
        self.inner.s
    }

    #[getter]
    fn mu_ref(&self) -> f64 {
        self.inner.mu_ref
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.inner.eps
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    fn __repr__(&self) -> String {
        format!("Solution(n={}, j={}, s={}, mu_ref={})", self.inner.n, self.inner.j, self.inner.s, self.inner.mu_ref)
    }
}

type TraceTuple = (usize, f64, f64, f64, usize, f64);

/// Outcome of one solver run.
#[pyclass(name = "Run", frozen)]
struct PyRun {
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    breakdown: bool,
    #[pyo3(get)]
    ell: f64,
    /// Rows `(iter, rel_res_exact, eps_inner, p_norm, inner_iters, elapsed_s)`.
    #[pyo3(get)]
    trace: Vec<TraceTuple>,
    #[pyo3(get)]
    solution: Py<PySolution>,
}

#[pymethods]
impl PyRun {
    fn __repr__(&self) -> String {
        format!("Run(iterations={}, converged={})", self.iterations, self.converged)
    }
}

/// Runs inexact infinite GMRES on `problem`.
#[pyfunction]
#[pyo3(signature = (
    problem,
    mu_ref,
    j_max = 50,
    eps = 1e-10,
    ell_policy = "fixed",
    ell = 1.0,
    inner = "lu",
    tol_policy = "lagged",
    max_it = 5000,
    seed = 0,
    stop_rel_res = None,
))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    problem: &PyProblem,
    mu_ref: f64,
    j_max: usize,
    eps: f64,
    ell_policy: &str,
    ell: f64,
    inner: &str,
    tol_policy: &str,
    max_it: usize,
    seed: u64,
    stop_rel_res: Option<f64>,
) -> PyResult<PyRun> {
    let config = SolverConfig {
        j_max,
        eps,
        ell_policy: parse::<EllPolicy>("ell_policy", ell_policy)?,
        ell,
        mu_ref,
        stop_rel_res,
        inner: InnerConfig {
            kind: parse::<InnerKind>("inner solver", inner)?,
            tol_policy: parse::<TolPolicy>("tol_policy", tol_policy)?,
            max_it,
            seed,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = py
        .detach(|| engine::run(&problem.family, &problem.rhs, &config))
        .map_err(to_py)?;
    let trace = run
        .trace
        .rows
        .iter()
        .map(|r| (r.iter, r.rel_res_exact, r.eps_inner, r.p_norm, r.inner_iters, r.elapsed_s))
        .collect();
    Ok(PyRun {
        iterations: run.iterations(),
        converged: run.converged,
        breakdown: run.breakdown,
        ell: run.ell,
        trace,
        solution: Py::new(py, PySolution { inner: run.solution })?,
    })
}

#[pymodule]
#[pyo3(name = "infgmres")]
fn infgmres_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add("TRACE_HEADER", TRACE_HEADER.to_vec())?;
    Ok(())
}
