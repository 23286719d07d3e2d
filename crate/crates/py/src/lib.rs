//! Python bindings for the `cmflow` crate.

use std::collections::BTreeMap;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cmflow::bodies::{BodySpec, DensitySpec};
use cmflow::elliptic::{fourier_solve_circle, newton_solve, FourierSymbol, NewtonOptions};
use cmflow::flow::{theta_bisection, BisectionConfig, Flow, FlowConfig, RunOutcome};
use cmflow::geometry::{body_metrics, SupportField};
use cmflow::sphere::{DomainGrid, GridSpec, ScalarField};
use cmflow::symfunc::{self, Spectrum, SymMatrix};
use cmflow::verifier::CheckReport;
use cmflow::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A discretization of the circle or the 2-sphere.
#[pyclass(name = "Grid", frozen)]
struct PyGrid {
    inner: Arc<DomainGrid>,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        let spec: GridSpec = spec.parse().map_err(py_err)?;
        Ok(PyGrid {
            inner: Arc::new(DomainGrid::new(spec).map_err(py_err)?),
        })
    }

    #[getter]
    fn spec(&self) -> String {
        self.inner.spec().to_string()
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Grid('{}')", self.inner.spec())
    }

    fn points(&self) -> Vec<[f64; 3]> {
        self.inner.points().to_vec()
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    fn integrate(&self, values: Vec<f64>) -> PyResult<f64> {
        self.inner.check_field(&values).map_err(py_err)?;
        Ok(self.inner.integrate(&values))
    }

    /// Samples a density spec such as `"harmonic:0.3@2"`.
    fn density(&self, spec: &str) -> PyResult<Vec<f64>> {
        let d: DensitySpec = spec.parse().map_err(py_err)?;
        Ok(d.sample(&self.inner).map_err(py_err)?.into_values())
    }

    /// Samples a body spec such as `"ellipsoid:2,1"`.
    fn body(&self, spec: &str) -> PyResult<Vec<f64>> {
        let b: BodySpec = spec.parse().map_err(py_err)?;
        Ok(b.sample(self.inner.clone()).map_err(py_err)?.values().to_vec())
    }

    /// Body metrics of the support function `h` for order `k`.
    fn metrics(&self, h: Vec<f64>, k: usize) -> PyResult<BTreeMap<String, f64>> {
        let h = support(&self.inner, h)?;
        let m = body_metrics(&h, k).map_err(py_err)?;
        Ok(BTreeMap::from([
            ("inner_radius".to_string(), m.inner_radius),
            ("outer_radius".to_string(), m.outer_radius),
            ("quermass".to_string(), m.quermass),
            ("sigma_min".to_string(), m.sigma_min),
            ("sigma_max".to_string(), m.sigma_max),
            ("lambda_min".to_string(), m.lambda_min),
            ("lambda_max".to_string(), m.lambda_max),
        ]))
    }
}

fn support(grid: &Arc<DomainGrid>, h: Vec<f64>) -> PyResult<SupportField> {
    SupportField::new(grid.clone(), ScalarField::new(h)).map_err(py_err)
}

/// `sigma_k` of a spectrum.
#[pyfunction]
fn sigma(lam: Vec<f64>, k: usize) -> PyResult<f64> {
    let s = Spectrum::new(lam).map_err(py_err)?;
    symfunc::sigma(&s, k).map_err(py_err)
}

/// `sigma_k` of a symmetric matrix given as rows.
#[pyfunction]
fn sigma_matrix(rows: Vec<Vec<f64>>, k: usize) -> PyResult<f64> {
    let a = SymMatrix::from_rows(&rows).map_err(py_err)?;
    symfunc::sigma_matrix(&a, k).map_err(py_err)
}

#[pyfunction]
fn in_gamma_k(lam: Vec<f64>, k: usize) -> PyResult<bool> {
    Ok(symfunc::in_gamma_k(&Spectrum::new(lam).map_err(py_err)?, k))
}

/// Returns `(xi, residual, iterations)`.
#[pyfunction]
fn solve_xi(grid: &PyGrid, f: Vec<f64>) -> PyResult<(Vec<f64>, f64, usize)> {
    let r = cmflow::xi::solve_xi(&f, &grid.inner).map_err(py_err)?;
    Ok((r.xi[..grid.inner.ambient_dim()].to_vec(), r.residual_norm, r.iterations))
}

/// Outcome of one flow run.
#[pyclass(name = "Run", frozen, get_all)]
struct PyRun {
    classification: String,
    reason: String,
    theta: f64,
    t: f64,
    steps: usize,
    speed_sup: f64,
    h: Vec<f64>,
    /// `(t, J)` at every accepted step.
    j_history: Vec<(f64, f64)>,
    rejected_functional: usize,
    rejected_convexity: usize,
}

#[pymethods]
impl PyRun {
    fn __repr__(&self) -> String {
        format!(
            "Run(classification='{}', theta={}, t={}, steps={})",
            self.classification, self.theta, self.t, self.steps
        )
    }
}

fn label<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

impl From<&RunOutcome> for PyRun {
    fn from(o: &RunOutcome) -> Self {
        PyRun {
            classification: label(&o.classification),
            reason: label(&o.reason),
            theta: o.theta,
            t: o.final_state.t,
            steps: o.steps.len() - 1,
            speed_sup: o.final_state.speed_sup,
            h: o.final_state.h.values().to_vec(),
            j_history: o.steps.iter().map(|s| (s.t, s.j)).collect(),
            rejected_functional: o.rejected_functional,
            rejected_convexity: o.rejected_convexity,
        }
    }
}

fn make_flow(grid: &PyGrid, k: usize, f: &str, weighted: bool, tol: f64, max_time: f64) -> PyResult<Flow> {
    let f = f.parse::<DensitySpec>().map_err(py_err)?.sample(&grid.inner).map_err(py_err)?;
    let mut cfg = FlowConfig::new(k, f);
    cfg.weighted = weighted;
    cfg.tol_converge = tol;
    cfg.max_time = max_time;
    Flow::new(grid.inner.clone(), cfg).map_err(py_err)
}

/// Runs the flow from `theta * h0`.
#[pyfunction]
#[pyo3(signature = (grid, k, f="constant:1", h0="ball:1", theta=1.0, weighted=false, tol=1e-6, max_time=1e3))]
#[allow(clippy::too_many_arguments)]
fn run_flow(
    py: Python<'_>,
    grid: &PyGrid,
    k: usize,
    f: &str,
    h0: &str,
    theta: f64,
    weighted: bool,
    tol: f64,
    max_time: f64,
) -> PyResult<PyRun> {
    let flow = make_flow(grid, k, f, weighted, tol, max_time)?;
    let h0 = h0.parse::<BodySpec>().map_err(py_err)?.sample(grid.inner.clone()).map_err(py_err)?;
    let run = py.allow_threads(|| flow.run_with_theta(&h0, theta)).map_err(py_err)?;
    Ok(PyRun::from(&run))
}

/// Bisects the dilation; returns `(theta_star, converged, run)`.
#[pyfunction]
#[pyo3(signature = (grid, k, f="constant:1", h0="ball:1", theta_lo=0.5, theta_hi=2.0, weighted=false, jobs=1))]
#[allow(clippy::too_many_arguments)]
fn sweep_theta(
    py: Python<'_>,
    grid: &PyGrid,
    k: usize,
    f: &str,
    h0: &str,
    theta_lo: f64,
    theta_hi: f64,
    weighted: bool,
    jobs: usize,
) -> PyResult<(f64, bool, PyRun)> {
    let flow = make_flow(grid, k, f, weighted, 1e-6, 1e3)?;
    let h0 = h0.parse::<BodySpec>().map_err(py_err)?.sample(grid.inner.clone()).map_err(py_err)?;
    let mut bc = BisectionConfig::new(theta_lo, theta_hi);
    bc.jobs = jobs;
    let b = py.allow_threads(|| theta_bisection(&flow, &h0, bc)).map_err(py_err)?;
    Ok((b.theta_star, b.converged, PyRun::from(&b.outcome)))
}

/// Solves `sigma_k(W(h)) = 1 / f_eff`; returns `(h, residual_sup, converged)`.
///
/// Circle grids with `k = 1` use the Fourier solve; otherwise damped Newton
/// from `h_init`.
#[pyfunction]
#[pyo3(signature = (grid, f_eff, k=1, h_init=None, tol=1e-8))]
fn solve_elliptic(
    grid: &PyGrid,
    f_eff: Vec<f64>,
    k: usize,
    h_init: Option<Vec<f64>>,
    tol: f64,
) -> PyResult<(Vec<f64>, f64, bool)> {
    let sol = match h_init {
        None if grid.inner.ambient_dim() == 2 && k == 1 => {
            fourier_solve_circle(grid.inner.clone(), &f_eff, FourierSymbol::Discrete).map_err(py_err)?
        }
        None => return Err(PyValueError::new_err("h_init is required for the Newton solve")),
        Some(h) => {
            let h = support(&grid.inner, h)?;
            let opts = NewtonOptions {
                tol,
                ..NewtonOptions::default()
            };
            newton_solve(&h, &f_eff, k, opts).map_err(py_err)?
        }
    };
    Ok((sol.h.values().to_vec(), sol.residual_sup, sol.converged))
}

/// Result of a population or run check.
#[pyclass(name = "Report", frozen, get_all)]
struct PyReport {
    check: String,
    population: usize,
    worst: f64,
    bound: f64,
    passed: bool,
    offending: Option<usize>,
    details: BTreeMap<String, f64>,
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        format!(
            "Report(check='{}', population={}, worst={}, bound={}, passed={})",
            self.check, self.population, self.worst, self.bound, self.passed
        )
    }
}

impl From<CheckReport> for PyReport {
    fn from(r: CheckReport) -> Self {
        PyReport {
            check: r.check,
            population: r.population,
            worst: r.worst,
            bound: r.bound,
            passed: r.pass,
            offending: r.offending,
            details: r.details,
        }
    }
}

#[pyfunction]
fn verify_chou_wang(py: Python<'_>, grid: &PyGrid, n: usize, seed: u64) -> PyResult<PyReport> {
    let r = py
        .allow_threads(|| cmflow::verifier::chou_wang_population(&grid.inner, n, seed))
        .map_err(py_err)?;
    Ok(r.into())
}

#[pyfunction]
fn verify_ellipsoid(grid: &PyGrid, a: f64, b: f64) -> PyResult<PyReport> {
    Ok(cmflow::verifier::check_ellipsoid_formulas(a, b, &grid.inner)
        .map_err(py_err)?
        .into())
}

#[pymodule]
fn cmflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyRun>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(sigma, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(in_gamma_k, m)?)?;
    m.add_function(wrap_pyfunction!(solve_xi, m)?)?;
    m.add_function(wrap_pyfunction!(run_flow, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_theta, m)?)?;
    m.add_function(wrap_pyfunction!(solve_elliptic, m)?)?;
    m.add_function(wrap_pyfunction!(verify_chou_wang, m)?)?;
    m.add_function(wrap_pyfunction!(verify_ellipsoid, m)?)?;
    Ok(())
}
