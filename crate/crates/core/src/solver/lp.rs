//! Reference solver: the conic reformulation of basis pursuit handed to the
//! Clarabel interior-point solver.
//!
//! Reals use `(x, t)` with `t ± x ≥ 0`, the half-line and the unit box are
//! orthant constraints on `x`, and complex coefficients become second-order
//! cone triples `(t, re, im)`. The objective is `Σ t` (or `Σ x` when `x ≥ 0`).

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};

use crate::coeffsets::CoefficientSet;
use crate::error::{PtlabError, Result};

/// Largest number of real unknowns accepted by [`lp_oracle`].
pub const LP_DIMENSION_LIMIT: usize = 64;

const TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    /// Optimal value of `‖x‖_{1,X}`.
    pub value: f64,
    /// Optimal point in real representation.
    pub x: Vec<f64>,
}

/// Drops numerically dependent equations: keeps `UᵣᵀA x = Uᵣᵀy`.
fn reduce_rows(a: &DMatrix<f64>, y: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > 1e-10 * smax).collect();
    let ur = DMatrix::from_fn(a.nrows(), keep.len(), |i, c| u[(i, keep[c])]);
    let yv = DVector::from_column_slice(y);
    (ur.transpose() * a, ur.transpose() * yv)
}

/// Problem data in Clarabel's `Ax + s = b, s ∈ K` form.
struct Conic {
    q: Vec<f64>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    nvars: usize,
}

impl Conic {
    fn push(&mut self, row: usize, col: usize, v: f64) {
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(v);
    }
}

fn formulate(a: &DMatrix<f64>, f: &DVector<f64>, set: CoefficientSet) -> Conic {
    let (r, n) = a.shape();
    let aux = match set {
        CoefficientSet::Real => n,
        CoefficientSet::Complex => n / 2,
        _ => 0,
    };
    let nvars = n + aux;
    let mut q = vec![0.0; nvars];
    if aux == 0 {
        q[..n].fill(1.0);
    } else {
        q[n..].fill(1.0);
    }
    let mut p = Conic {
        q,
        rows: vec![],
        cols: vec![],
        vals: vec![],
        b: f.iter().copied().collect(),
        cones: vec![SupportedConeT::ZeroConeT(r)],
        nvars,
    };
    for j in 0..n {
        for i in 0..r {
            if a[(i, j)] != 0.0 {
                p.push(i, j, a[(i, j)]);
            }
        }
    }
    let mut row = r;
    match set {
        CoefficientSet::Real => {
            // s = t - x and s = t + x
            for j in 0..n {
                p.push(row, j, 1.0);
                p.push(row, n + j, -1.0);
                p.push(row + 1, j, -1.0);
                p.push(row + 1, n + j, -1.0);
                p.b.extend([0.0, 0.0]);
                row += 2;
            }
            p.cones.push(SupportedConeT::NonnegativeConeT(2 * n));
        }
        CoefficientSet::NonNeg => {
            for j in 0..n {
                p.push(row + j, j, -1.0);
                p.b.push(0.0);
            }
            p.cones.push(SupportedConeT::NonnegativeConeT(n));
        }
        CoefficientSet::Box01 => {
            // s = x and s = 1 - x
            for j in 0..n {
                p.push(row, j, -1.0);
                p.push(row + 1, j, 1.0);
                p.b.extend([0.0, 1.0]);
                row += 2;
            }
            p.cones.push(SupportedConeT::NonnegativeConeT(2 * n));
        }
        CoefficientSet::Complex => {
            for k in 0..n / 2 {
                p.push(row, n + k, -1.0);
                p.push(row + 1, 2 * k, -1.0);
                p.push(row + 2, 2 * k + 1, -1.0);
                p.b.extend([0.0, 0.0, 0.0]);
                p.cones.push(SupportedConeT::SecondOrderConeT(3));
                row += 3;
            }
        }
    }
    p
}

/// Solves `min ‖x‖_{1,X} s.t. Ax = y, x ∈ X` with an interior-point method.
///
/// `a` is dense in real representation (complex sets use interleaved pairs).
/// Refuses problems with more than [`LP_DIMENSION_LIMIT`] real unknowns.
pub fn lp_oracle(a: &DMatrix<f64>, y: &[f64], set: CoefficientSet) -> Result<LpSolution> {
    let n = a.ncols();
    if n > LP_DIMENSION_LIMIT {
        return Err(PtlabError::GuardExceeded {
            guard: "lp_oracle dimension",
            limit: LP_DIMENSION_LIMIT,
            requested: n,
        });
    }
    if a.nrows() != y.len() {
        return Err(PtlabError::ShapeMismatch(format!(
            "A has {} rows but y has {} entries",
            a.nrows(),
            y.len()
        )));
    }
    if set.is_complex() && !n.is_multiple_of(2) {
        return Err(PtlabError::ShapeMismatch(
            "complex problems need an even number of real columns".into(),
        ));
    }
    let (ar, fr) = reduce_rows(a, y);
    let p = formulate(&ar, &fr, set);
    let nrows = p.b.len();
    let amat = CscMatrix::new_from_triplets(nrows, p.nvars, p.rows, p.cols, p.vals);
    let pmat = CscMatrix::new_from_triplets(p.nvars, p.nvars, vec![], vec![], vec![]);
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(TOL)
        .tol_gap_rel(TOL)
        .tol_feas(TOL)
        .tol_ktratio(1e-8)
        .max_iter(400)
        .build()
        .map_err(|e| PtlabError::Numerical(format!("solver settings: {e}")))?;
    let mut solver = DefaultSolver::new(&pmat, &p.q, &amat, &p.b, &p.cones, settings)
        .map_err(|e| PtlabError::Numerical(format!("solver setup: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(PtlabError::InvalidArgument(
                "no feasible point for the equality constraints".into(),
            ))
        }
        other => {
            return Err(PtlabError::Numerical(format!("interior point ended with {other:?}")))
        }
    }
    let x = sol.x[..n].to_vec();
    let infeas = (a * DVector::from_column_slice(&x) - DVector::from_column_slice(y)).norm();
    if infeas > 1e-6 * (1.0 + DVector::from_column_slice(y).norm()) {
        return Err(PtlabError::Numerical(format!(
            "interior point ended with equality residual {infeas:e}"
        )));
    }
    Ok(LpSolution {
        value: sol.obj_val,
        x,
    })
}
