//! Basis pursuit over a coefficient set: minimize `‖x‖_{1,X}` subject to
//! `Ax = y` and `x ∈ X`.
//!
//! The engine is ADMM on `min f(z) + g(x)` with `x = z`, where `g` is the
//! indicator of `{Ax = y}` and `f` is the `ℓ1,X` norm plus the indicator of
//! `X`. The x-update is an orthogonal projection built once per block from an
//! SVD; the z-update is the proximal map of the coefficient set. Block-diagonal
//! operators are solved block by block.

mod lp;

pub use lp::{lp_oracle, LpSolution, LP_DIMENSION_LIMIT};

use serde::{Deserialize, Serialize};

use crate::coeffsets::{norm_l1x_slice, prox_in_place, CoefficientSet, SignalVector};
use crate::ensembles::MeasurementOperator;
use crate::error::{invalid, PtlabError, Result};
use crate::linalg::{self, norm2, AffineProjector};

/// Penalty adaptation stops after this many iterations so that the fixed-penalty
/// convergence guarantee applies to the tail.
const BALANCE_WINDOW: usize = 2_000;

/// Relative error below which a reconstruction counts as a success.
pub const SUCCESS_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Equality tolerance, relative to `1 + ‖y‖`.
    pub feas_tol: f64,
    /// Relative primal/dual residual tolerance for ADMM stopping.
    pub obj_tol: f64,
    pub max_iters: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    /// Singular values below `rank_tol · σ_max` are treated as zero.
    pub rank_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            obj_tol: 1e-9,
            max_iters: 50_000,
            rho: 1.0,
            rank_tol: 1e-10,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive(self.feas_tol, "feas_tol")?;
        positive(self.obj_tol, "obj_tol")?;
        positive(self.rho, "rho")?;
        positive(self.rank_tol, "rank_tol")?;
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub x1: SignalVector,
    pub status: SolveStatus,
    /// `‖A x1 − y‖₂`.
    pub primal_residual: f64,
    /// Final ADMM dual residual `ρ‖z − z_prev‖₂`.
    pub dual_residual: f64,
    /// Largest per-block iteration count.
    pub iterations: usize,
    /// `‖x1‖_{1,X}`.
    pub objective: f64,
}

struct BlockOutcome {
    z: Vec<f64>,
    status: SolveStatus,
    dual: f64,
    iterations: usize,
}

fn admm_block(
    a: &nalgebra::DMatrix<f64>,
    proj: &AffineProjector,
    y: &[f64],
    set: CoefficientSet,
    opts: &SolverOptions,
) -> BlockOutcome {
    let cols = a.ncols();
    let xp = proj.particular(y);
    let ynorm = norm2(y);
    let feas_bound = opts.feas_tol * (1.0 + ynorm);
    let mut ax = vec![0.0; a.nrows()];
    let residual = |x: &[f64], ax: &mut Vec<f64>| {
        linalg::matvec(a, x, ax);
        ax.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
    };
    if residual(&xp, &mut ax) > feas_bound {
        return BlockOutcome {
            z: xp,
            status: SolveStatus::Infeasible,
            dual: f64::NAN,
            iterations: 0,
        };
    }
    // zero lies in every coefficient set and has zero norm
    if ynorm == 0.0 {
        return BlockOutcome {
            z: vec![0.0; cols],
            status: SolveStatus::Converged,
            dual: 0.0,
            iterations: 0,
        };
    }

    let abs_tol = opts.obj_tol * 1e-3;
    let sqrt_n = (cols as f64).sqrt();
    let mut rho = opts.rho;
    let mut x = xp.clone();
    let mut z = xp.clone();
    prox_in_place(set, &mut z, 1.0 / rho);
    let mut u = vec![0.0; cols];
    let mut z_old = vec![0.0; cols];
    let mut scratch = Vec::new();
    let mut dual = f64::INFINITY;

    for it in 1..=opts.max_iters {
        // x = P_{Ax=y}(z - u)
        for i in 0..cols {
            x[i] = z[i] - u[i] - xp[i];
        }
        proj.project_null(&mut x, &mut scratch);
        for i in 0..cols {
            x[i] += xp[i];
        }
        z_old.copy_from_slice(&z);
        for i in 0..cols {
            z[i] = x[i] + u[i];
        }
        prox_in_place(set, &mut z, 1.0 / rho);
        let mut r2 = 0.0;
        let mut s2 = 0.0;
        for i in 0..cols {
            let r = x[i] - z[i];
            u[i] += r;
            r2 += r * r;
            let d = z[i] - z_old[i];
            s2 += d * d;
        }
        let r = r2.sqrt();
        let s = rho * s2.sqrt();
        dual = s;

        let eps_pri = sqrt_n * abs_tol + opts.obj_tol * norm2(&x).max(norm2(&z));
        let eps_dual = sqrt_n * abs_tol + opts.obj_tol * rho * norm2(&u);
        if r <= eps_pri && s <= eps_dual && residual(&z, &mut ax) <= feas_bound {
            return BlockOutcome {
                z,
                status: SolveStatus::Converged,
                dual,
                iterations: it,
            };
        }

        // residual balancing; u is scaled, so it moves inversely with rho
        if it % 10 == 0 && it <= BALANCE_WINDOW {
            if r > 10.0 * s {
                rho *= 2.0;
                u.iter_mut().for_each(|v| *v /= 2.0);
            } else if s > 10.0 * r {
                rho /= 2.0;
                u.iter_mut().for_each(|v| *v *= 2.0);
            }
        }
    }
    BlockOutcome {
        z,
        status: SolveStatus::MaxIters,
        dual,
        iterations: opts.max_iters,
    }
}

/// Solves `min ‖x‖_{1,X} s.t. Ax = y, x ∈ X`.
///
/// `y` is in real representation. Non-convergence is reported through
/// [`SolveStatus`], not as an error.
pub fn solve_p1(
    op: &MeasurementOperator,
    y: &[f64],
    set: CoefficientSet,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    if op.input_dim() != set.ambient_dim() {
        return Err(PtlabError::ShapeMismatch(format!(
            "operator takes {}-real coefficients but {set} has dimension {}",
            op.input_dim(),
            set.ambient_dim()
        )));
    }
    if y.len() != op.real_rows() {
        return Err(PtlabError::ShapeMismatch(format!(
            "y has {} reals, operator produces {}",
            y.len(),
            op.real_rows()
        )));
    }
    let (br, bc) = (op.block_real_rows(), op.block_real_cols());
    let projectors: Vec<AffineProjector> = (0..op.stored_blocks())
        .map(|b| AffineProjector::new(op.block(b), opts.rank_tol))
        .collect();
    let mut entries = Vec::with_capacity(op.real_cols());
    let mut status = SolveStatus::Converged;
    let mut dual2 = 0.0;
    let mut iterations = 0;
    for b in 0..op.num_blocks() {
        let proj = &projectors[b.min(projectors.len() - 1)];
        let out = admm_block(op.block(b), proj, &y[b * br..(b + 1) * br], set, opts);
        debug_assert_eq!(out.z.len(), bc);
        status = status.max(out.status);
        dual2 += out.dual * out.dual;
        iterations = iterations.max(out.iterations);
        entries.extend(out.z);
    }
    let ax = op.apply(&entries)?;
    let primal_residual = ax
        .iter()
        .zip(y)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt();
    let objective = norm_l1x_slice(set, &entries);
    let x1 = SignalVector::from_raw(entries, set, op.descriptor().block_cols, op.num_blocks());
    Ok(SolveResult {
        x1,
        status,
        primal_residual,
        dual_residual: dual2.sqrt(),
        iterations,
        objective,
    })
}

/// Relative error `‖x0 − x1‖₂ / ‖x0‖₂`.
pub fn relative_error(x0: &SignalVector, x1: &SignalVector) -> Result<f64> {
    if x0.entries().len() != x1.entries().len() || x0.coeff_set() != x1.coeff_set() {
        return Err(PtlabError::ShapeMismatch(
            "signals differ in length or coefficient set".into(),
        ));
    }
    let n0 = x0.norm_l2();
    if n0 == 0.0 {
        return Err(invalid("relative error undefined for x0 = 0"));
    }
    let d = x0
        .entries()
        .iter()
        .zip(x1.entries())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(d / n0)
}

/// True iff the relative error is below [`SUCCESS_THRESHOLD`].
pub fn declare_success(x0: &SignalVector, x1: &SignalVector) -> Result<bool> {
    Ok(relative_error(x0, x1)? < SUCCESS_THRESHOLD)
}

/// Success for a trial, where an all-zero `x0` (ℓ = 0) counts as recovered
/// when the solution is within the threshold in absolute terms.
pub fn trial_success(x0: &SignalVector, x1: &SignalVector) -> Result<bool> {
    if x0.norm_l2() == 0.0 {
        return Ok(x1.norm_l2() < SUCCESS_THRESHOLD);
    }
    declare_success(x0, x1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{
        dense_operator, make_block_diagonal, partial_dft_block, partial_real_fourier_block,
        sample_signal, sample_use, Field, ProblemSizes,
    };
    use crate::linalg::realify;
    use crate::rng::SeedStream;
    use nalgebra::DMatrix;

    fn sig(set: CoefficientSet, v: Vec<f64>, blocks: usize) -> SignalVector {
        let n = v.len() / set.ambient_dim() / blocks;
        SignalVector::new(v, set, n, blocks).unwrap()
    }

    #[test]
    fn identity_recovers_anything() {
        let op = dense_operator(DMatrix::identity(5, 5), Field::Real).unwrap();
        let x0 = sig(CoefficientSet::Real, vec![1.0, -2.0, 0.0, 0.3, 4.0], 1);
        let y = op.apply(x0.entries()).unwrap();
        let res = solve_p1(&op, &y, CoefficientSet::Real, &SolverOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Converged);
        for (a, b) in res.x1.entries().iter().zip(x0.entries()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn one_sparse_recovery_with_three_fourier_rows() {
        let a = partial_real_fourier_block(4, &[0, 1, 2]).unwrap();
        let op = dense_operator(a, Field::Real).unwrap();
        let x0 = sig(CoefficientSet::Real, vec![0.0, 1.0, 0.0, 0.0], 1);
        let y = op.apply(x0.entries()).unwrap();
        let res = solve_p1(&op, &y, CoefficientSet::Real, &SolverOptions::default()).unwrap();
        assert!(relative_error(&x0, &res.x1).unwrap() < 1e-6);
    }

    #[test]
    fn dense_signal_is_not_recovered() {
        let a = partial_real_fourier_block(4, &[0, 1, 2]).unwrap();
        let op = dense_operator(a, Field::Real).unwrap();
        let x0 = sig(CoefficientSet::Real, vec![1.0, -0.7, 0.4, 1.3], 1);
        let y = op.apply(x0.entries()).unwrap();
        let res = solve_p1(&op, &y, CoefficientSet::Real, &SolverOptions::default()).unwrap();
        assert!(relative_error(&x0, &res.x1).unwrap() > 1e-3);
        assert!(res.objective <= x0.norm_l1x() + 1e-9);
    }

    #[test]
    fn success_threshold_examples() {
        let x0 = sig(CoefficientSet::Real, vec![1.0, 0.0], 1);
        assert!(declare_success(&x0, &x0).unwrap());
        let far = sig(CoefficientSet::Real, vec![1.002, 0.0], 1);
        assert!(!declare_success(&x0, &far).unwrap());
        let near = sig(CoefficientSet::Real, vec![1.0009, 0.0], 1);
        assert!(declare_success(&x0, &near).unwrap());
        let zero = SignalVector::zeros(CoefficientSet::Real, 2, 1);
        assert!(declare_success(&zero, &x0).is_err());
    }

    #[test]
    fn inconsistent_system_is_infeasible() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let op = dense_operator(a, Field::Real).unwrap();
        let res = solve_p1(&op, &[1.0, 2.0], CoefficientSet::Real, &SolverOptions::default())
            .unwrap();
        assert_eq!(res.status, SolveStatus::Infeasible);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mut rng = SeedStream::new(1).rng("t", 0);
        let a = sample_use(6, 12, Field::Real, &mut rng).unwrap();
        let op = dense_operator(a, Field::Real).unwrap();
        let x0 = sample_signal(&ProblemSizes::new(4, 6, 12, 1).unwrap(), CoefficientSet::Real, &SeedStream::new(2)).unwrap();
        let y = op.apply(x0.entries()).unwrap();
        let opts = SolverOptions {
            max_iters: 3,
            ..Default::default()
        };
        let res = solve_p1(&op, &y, CoefficientSet::Real, &opts).unwrap();
        assert_eq!(res.status, SolveStatus::MaxIters);
        assert_eq!(res.iterations, 3);
    }

    #[test]
    fn block_separable_value_is_a_sum() {
        let seeds = SeedStream::new(17);
        let sizes = ProblemSizes::new(2, 5, 8, 4).unwrap();
        for set in CoefficientSet::ALL {
            let field = Field::for_set(set);
            let blocks: Vec<_> = (0..4)
                .map(|b| sample_use(5, 8, field, &mut seeds.rng("blk", b)).unwrap())
                .collect();
            let op = make_block_diagonal(blocks.clone(), 4, false, field).unwrap();
            let x0 = sample_signal(&sizes, set, &seeds).unwrap();
            let y = op.apply(x0.entries()).unwrap();
            let whole = solve_p1(&op, &y, set, &SolverOptions::default()).unwrap();
            let rows = op.block_real_rows();
            let sum: f64 = blocks
                .into_iter()
                .enumerate()
                .map(|(b, blk)| {
                    let single = dense_operator(blk, field).unwrap();
                    solve_p1(&single, &y[b * rows..(b + 1) * rows], set, &SolverOptions::default())
                        .unwrap()
                        .objective
                })
                .sum();
            assert!((whole.objective - sum).abs() < 1e-7, "{set}");
        }
    }

    #[test]
    fn scaling_leaves_solution_unchanged() {
        let seeds = SeedStream::new(4);
        let a = sample_use(6, 10, Field::Real, &mut seeds.rng("a", 0)).unwrap();
        let x0 = sample_signal(&ProblemSizes::new(2, 6, 10, 1).unwrap(), CoefficientSet::Real, &seeds).unwrap();
        let op = dense_operator(a.clone(), Field::Real).unwrap();
        let y = op.apply(x0.entries()).unwrap();
        let base = solve_p1(&op, &y, CoefficientSet::Real, &SolverOptions::default()).unwrap();
        let c = 3.5;
        let op2 = dense_operator(a * c, Field::Real).unwrap();
        let y2: Vec<f64> = y.iter().map(|v| v * c).collect();
        let scaled = solve_p1(&op2, &y2, CoefficientSet::Real, &SolverOptions::default()).unwrap();
        assert!((scaled.objective / base.objective - 1.0).abs() < 1e-7);
    }

    #[test]
    fn complex_partial_dft_recovers_sparse_signal() {
        let blk = realify(&partial_dft_block(16, &[0, 2, 3, 5, 7, 8, 11, 12, 14, 15]).unwrap());
        let op = make_block_diagonal(vec![blk], 2, true, Field::Complex).unwrap();
        let sizes = ProblemSizes::new(2, 10, 16, 2).unwrap();
        let x0 = sample_signal(&sizes, CoefficientSet::Complex, &SeedStream::new(3)).unwrap();
        let y = op.apply(x0.entries()).unwrap();
        let res = solve_p1(&op, &y, CoefficientSet::Complex, &SolverOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Converged);
        assert!(declare_success(&x0, &res.x1).unwrap());
    }

    #[test]
    fn options_are_validated() {
        let op = dense_operator(DMatrix::identity(2, 2), Field::Real).unwrap();
        let bad = SolverOptions {
            rho: 0.0,
            ..Default::default()
        };
        assert!(solve_p1(&op, &[1.0, 0.0], CoefficientSet::Real, &bad).is_err());
        let op_c = dense_operator(DMatrix::identity(2, 2), Field::Complex).unwrap();
        assert!(solve_p1(&op_c, &[1.0, 0.0], CoefficientSet::Real, &SolverOptions::default()).is_err());
    }
}
