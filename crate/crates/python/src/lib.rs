//! Python bindings. Vectors cross the boundary as flat lists of floats in
//! real representation (complex entries interleaved as re, im); structured
//! results come back as dicts.

#![allow(non_snake_case, clippy::too_many_arguments)]

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use ptlab::ensembles::{
    aniso_sampler_2d, dense_operator, iso_sampler_2d, make_block_diagonal, partial_dft_block,
    partial_real_fourier_block, sample_signal as core_sample_signal, sample_use, Field,
};
use ptlab::exactprob;
use ptlab::experiments::{
    run_phase_grid, run_trials as core_run_trials, CellSummary, Ensemble, ExperimentConfig,
    GridConfig, MatrixPolicy,
};
use ptlab::inference::{self, DoseCell, Link};
use ptlab::linalg::realify;
use ptlab::predict::{self, Order};
use ptlab::solver::{self, SolverOptions};
use ptlab::verify;
use ptlab::{CoefficientSet, MeasurementOperator, ProblemSizes, PtlabError, SeedStream};

fn err(e: PtlabError) -> PyErr {
    match e {
        PtlabError::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn coeff(s: &str) -> PyResult<CoefficientSet> {
    s.parse().map_err(err)
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<nalgebra::DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(nalgebra::DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn solver_options(feas_tol: Option<f64>, obj_tol: Option<f64>, max_iters: Option<usize>, rho: Option<f64>) -> SolverOptions {
    let mut o = SolverOptions::default();
    if let Some(v) = feas_tol {
        o.feas_tol = v;
    }
    if let Some(v) = obj_tol {
        o.obj_tol = v;
    }
    if let Some(v) = max_iters {
        o.max_iters = v;
    }
    if let Some(v) = rho {
        o.rho = v;
    }
    o
}

/// Linear measurement operator (dense, block-diagonal or 2D Fourier sampler).
#[pyclass(name = "MeasurementOperator", module = "ptlab", from_py_object)]
#[derive(Clone)]
struct PyOperator {
    inner: MeasurementOperator,
}

#[pymethods]
impl PyOperator {
    /// Dense operator from a list of rows in real representation.
    #[staticmethod]
    #[pyo3(signature = (rows, complex = false))]
    fn dense(rows: Vec<Vec<f64>>, complex: bool) -> PyResult<Self> {
        let field = if complex { Field::Complex } else { Field::Real };
        Ok(Self {
            inner: dense_operator(matrix(&rows)?, field).map_err(err)?,
        })
    }

    /// Block-diagonal operator whose blocks are rows `indices` of the unitary
    /// DFT (or of the real Fourier basis when `real` is set).
    #[staticmethod]
    #[pyo3(signature = (M, indices, B = 1, real = false))]
    fn partial_fourier(M: usize, indices: Vec<usize>, B: usize, real: bool) -> PyResult<Self> {
        let (blk, field) = if real {
            (partial_real_fourier_block(M, &indices).map_err(err)?, Field::Real)
        } else {
            (realify(&partial_dft_block(M, &indices).map_err(err)?), Field::Complex)
        };
        Ok(Self {
            inner: make_block_diagonal(vec![blk], B, true, field).map_err(err)?,
        })
    }

    /// Block-diagonal uniform spherical ensemble.
    #[staticmethod]
    #[pyo3(signature = (m, M, B = 1, complex = false, repeated = false, seed = 0))]
    fn uniform_spherical(m: usize, M: usize, B: usize, complex: bool, repeated: bool, seed: u64) -> PyResult<Self> {
        let field = if complex { Field::Complex } else { Field::Real };
        let root = SeedStream::new(seed);
        let count = if repeated { 1 } else { B };
        let blocks = (0..count)
            .map(|i| sample_use(m, M, field, &mut root.rng("matrix", i as u64)))
            .collect::<ptlab::Result<Vec<_>>>()
            .map_err(err)?;
        Ok(Self {
            inner: make_block_diagonal(blocks, B, repeated, field).map_err(err)?,
        })
    }

    /// Anisotropic 2D sampler on an `M x M` grid: all rows of axis 0, rows `K1` of axis 1.
    #[staticmethod]
    fn aniso_2d(M: usize, K1: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: aniso_sampler_2d(M, &K1).map_err(err)?,
        })
    }

    /// Isotropic 2D sampler with `n` random frequencies.
    #[staticmethod]
    #[pyo3(signature = (M, n, seed = 0))]
    fn iso_2d(M: usize, n: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: iso_sampler_2d(M, n, seed).map_err(err)?,
        })
    }

    fn restrict_to_real_inputs(&self) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.restrict_to_real_inputs().map_err(err)?,
        })
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.apply(&x).map_err(err)
    }

    fn adjoint(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.adjoint(&y).map_err(err)
    }

    fn to_dense(&self) -> Vec<Vec<f64>> {
        let d = self.inner.to_dense();
        d.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn descriptor<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.descriptor())
    }

    #[getter]
    fn real_rows(&self) -> usize {
        self.inner.real_rows()
    }

    #[getter]
    fn real_cols(&self) -> usize {
        self.inner.real_cols()
    }

    #[getter]
    fn num_blocks(&self) -> usize {
        self.inner.num_blocks()
    }

    fn __repr__(&self) -> String {
        format!(
            "MeasurementOperator(kind={:?}, real_rows={}, real_cols={}, blocks={})",
            self.inner.kind(),
            self.inner.real_rows(),
            self.inner.real_cols(),
            self.inner.num_blocks()
        )
    }
}

/// Solves `min ‖x‖₁ s.t. Ax = y, x ∈ X`; returns a dict with `x1`, `status`,
/// `objective` and residuals.
#[pyfunction]
#[pyo3(signature = (op, y, coeffset, feas_tol = None, obj_tol = None, max_iters = None, rho = None))]
fn solve_p1<'py>(
    py: Python<'py>,
    op: &PyOperator,
    y: Vec<f64>,
    coeffset: &str,
    feas_tol: Option<f64>,
    obj_tol: Option<f64>,
    max_iters: Option<usize>,
    rho: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = solver_options(feas_tol, obj_tol, max_iters, rho);
    let r = solver::solve_p1(&op.inner, &y, coeff(coeffset)?, &opts).map_err(err)?;
    to_py(
        py,
        &serde_json::json!({
            "x1": r.x1.entries(),
            "status": r.status,
            "objective": r.objective,
            "primal_residual": r.primal_residual,
            "dual_residual": r.dual_residual,
            "iterations": r.iterations,
        }),
    )
}

/// Interior-point reference value for a dense problem.
#[pyfunction]
fn lp_oracle<'py>(py: Python<'py>, rows: Vec<Vec<f64>>, y: Vec<f64>, coeffset: &str) -> PyResult<Bound<'py, PyAny>> {
    let s = solver::lp_oracle(&matrix(&rows)?, &y, coeff(coeffset)?).map_err(err)?;
    to_py(py, &serde_json::json!({"value": s.value, "x": s.x}))
}

/// Random regularly sparse signal in real representation.
#[pyfunction]
#[pyo3(signature = (ell, M, B, coeffset, seed = 0))]
fn sample_signal(ell: usize, M: usize, B: usize, coeffset: &str, seed: u64) -> PyResult<Vec<f64>> {
    let sizes = ProblemSizes::new(ell, 1.min(M), M, B).map_err(err)?;
    Ok(core_sample_signal(&sizes, coeff(coeffset)?, &SeedStream::new(seed))
        .map_err(err)?
        .into_entries())
}

#[pyfunction]
fn q_sb_exact(ell: u64, m: u64, M: u64) -> PyResult<f64> {
    exactprob::q_sb_exact(ell, m, M).map_err(err)
}

#[pyfunction]
fn q_mb_exact(ell: u64, m: u64, M: u64, B: u64) -> PyResult<f64> {
    exactprob::q_mb_exact(ell, m, M, B).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (m, M, B = 1, q_star = None))]
fn critical_ell<'py>(py: Python<'py>, m: u64, M: u64, B: u64, q_star: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let q = q_star.unwrap_or_else(|| exactprob::default_q_star(B));
    to_py(py, &exactprob::critical_ell(m, M, B, q).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (m, M, B = 1))]
fn exact_table<'py>(py: Python<'py>, m: u64, M: u64, B: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &exactprob::exact_table(m, M, B).map_err(err)?)
}

#[pyfunction]
fn asymptotic_pt(delta: f64, coeffset: &str) -> PyResult<f64> {
    predict::asymptotic_pt(delta, coeff(coeffset)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (m, M, B, coeffset, order = 2))]
fn predict_pt<'py>(py: Python<'py>, m: u64, M: u64, B: u64, coeffset: &str, order: u8) -> PyResult<Bound<'py, PyAny>> {
    let order = Order::from_int(order).map_err(err)?;
    to_py(py, &predict::predict_pt(m, M, B, coeff(coeffset)?, order).map_err(err)?)
}

fn experiment(
    ell: usize,
    m: usize,
    M: usize,
    B: usize,
    coeffset: &str,
    ensemble: &str,
    trials: usize,
    seed: u64,
    fixed_matrix: bool,
) -> PyResult<ExperimentConfig> {
    Ok(ExperimentConfig {
        sizes: ProblemSizes::new(ell, m, M, B).map_err(err)?,
        coeff_set: coeff(coeffset)?,
        ensemble: ensemble.parse::<Ensemble>().map_err(err)?,
        matrix_policy: if fixed_matrix { MatrixPolicy::Fixed } else { MatrixPolicy::Fresh },
        trials,
        seed,
        solver: SolverOptions::default(),
    })
}

/// One Monte-Carlo cell; returns the summary dict and the per-trial records.
#[pyfunction]
#[pyo3(signature = (ell, m, M, B, coeffset, ensemble = "dbuse", trials = 100, seed = 0, fixed_matrix = false))]
fn run_trials<'py>(
    py: Python<'py>,
    ell: usize,
    m: usize,
    M: usize,
    B: usize,
    coeffset: &str,
    ensemble: &str,
    trials: usize,
    seed: u64,
    fixed_matrix: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = experiment(ell, m, M, B, coeffset, ensemble, trials, seed, fixed_matrix)?;
    let records = py.detach(|| core_run_trials(&cfg)).map_err(err)?;
    let summary = CellSummary::from_records(&cfg, &records);
    to_py(py, &serde_json::json!({"summary": summary, "records": records}))
}

/// Success table over `ells` (a window around the prediction when omitted).
#[pyfunction]
#[pyo3(signature = (m, M, B, coeffset, ensemble = "dbuse", trials = 100, seed = 0, ells = None))]
fn run_grid<'py>(
    py: Python<'py>,
    m: usize,
    M: usize,
    B: usize,
    coeffset: &str,
    ensemble: &str,
    trials: usize,
    seed: u64,
    ells: Option<Vec<usize>>,
) -> PyResult<Bound<'py, PyAny>> {
    let grid = GridConfig {
        base: experiment(0, m, M, B, coeffset, ensemble, trials, seed, false)?,
        ells,
        half_width: None,
    };
    let table = py.detach(|| run_phase_grid(&grid)).map_err(err)?;
    to_py(py, &table.rows)
}

/// Binomial GLM fit of `successes / trials` against `eps`.
#[pyfunction]
#[pyo3(signature = (eps, trials, successes, link = "cloglog"))]
fn fit_quantal<'py>(
    py: Python<'py>,
    eps: Vec<f64>,
    trials: Vec<f64>,
    successes: Vec<f64>,
    link: &str,
) -> PyResult<Bound<'py, PyAny>> {
    if eps.len() != trials.len() || eps.len() != successes.len() {
        return Err(PyValueError::new_err("eps, trials and successes differ in length"));
    }
    let cells: Vec<DoseCell> = eps
        .iter()
        .zip(&trials)
        .zip(&successes)
        .map(|((&eps, &trials), &successes)| DoseCell { eps, trials, successes })
        .collect();
    let link: Link = link.parse().map_err(err)?;
    to_py(py, &inference::fit_quantal(&cells, link).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (y_bar, trials, B, q_star = None, alpha = 0.05))]
fn hypothesis_test<'py>(
    py: Python<'py>,
    y_bar: f64,
    trials: u64,
    B: u64,
    q_star: Option<f64>,
    alpha: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let q = q_star.unwrap_or_else(|| exactprob::default_q_star(B));
    to_py(py, &inference::hypothesis_test(y_bar, trials, B, q, alpha).map_err(err)?)
}

#[pyfunction]
fn check_gram_structure<'py>(py: Python<'py>, op: &PyOperator) -> PyResult<Bound<'py, PyAny>> {
    let r = verify::check_gram_structure(&op.inner).map_err(err)?;
    let mut v = serde_json::to_value(&r).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    v["pass"] = serde_json::Value::Bool(r.pass());
    to_py(py, &v)
}

/// Runs the verification suite; returns the report dict.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn verify_all<'py>(py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let report = py.detach(|| verify::run_all(seed, &SolverOptions::default())).map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
#[pyo3(name = "ptlab")]
fn ptlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyOperator>()?;
    m.add_function(wrap_pyfunction!(solve_p1, m)?)?;
    m.add_function(wrap_pyfunction!(lp_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(sample_signal, m)?)?;
    m.add_function(wrap_pyfunction!(q_sb_exact, m)?)?;
    m.add_function(wrap_pyfunction!(q_mb_exact, m)?)?;
    m.add_function(wrap_pyfunction!(critical_ell, m)?)?;
    m.add_function(wrap_pyfunction!(exact_table, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_pt, m)?)?;
    m.add_function(wrap_pyfunction!(predict_pt, m)?)?;
    m.add_function(wrap_pyfunction!(run_trials, m)?)?;
    m.add_function(wrap_pyfunction!(run_grid, m)?)?;
    m.add_function(wrap_pyfunction!(fit_quantal, m)?)?;
    m.add_function(wrap_pyfunction!(hypothesis_test, m)?)?;
    m.add_function(wrap_pyfunction!(check_gram_structure, m)?)?;
    m.add_function(wrap_pyfunction!(verify_all, m)?)?;
    Ok(())
}
