//! Dense numerical checks of the structural results behind the anisotropic
//! sampler: Gram block structure, Fourier eigenvectors, rank reduction,
//! equivalence with the repeated block-diagonal problem, and the
//! isometry factorization. Everything here is small and dense on purpose.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffsets::CoefficientSet;
use crate::ensembles::{
    aniso_sampler_2d, aniso_sampler_2d_rect, blocks_to_grid, dense_operator, grid_to_blocks,
    make_block_diagonal, partial_dft_block, sample_signal, BlockSource, Field, MeasurementOperator,
    OperatorKind, ProblemSizes,
};
use crate::error::{invalid, PtlabError, Result};
use crate::linalg::{complexify, realify, C64};
use crate::rng::SeedStream;
use crate::solver::{solve_p1, trial_success, SolveStatus, SolverOptions};

/// Singular values above this fraction of the largest count toward the rank.
pub const RANK_REL_TOL: f64 = 1e-10;

fn numerical_rank(sv: &DVector<f64>, rel: f64) -> (usize, bool) {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return (0, false);
    }
    let thr = rel * smax;
    let rank = sv.iter().filter(|&&s| s > thr).count();
    let ambiguous = sv.iter().any(|&s| s > thr / 10.0 && s < thr * 10.0);
    (rank, ambiguous)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigvecResidual {
    pub ell: usize,
    pub in_k: bool,
    /// `‖G¹V − V‖/‖V‖` when `ell ∈ K1`, otherwise `‖G¹V‖/‖V‖`.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramReport {
    pub t0: usize,
    pub t1: usize,
    pub indices: Vec<usize>,
    /// `G` in real-pair form (`2N x 2N`).
    #[serde(skip)]
    pub gram: DMatrix<f64>,
    pub max_offblock: f64,
    pub max_block_deviation: f64,
    pub block_rank: usize,
    pub rank_ambiguous: bool,
    pub eigvec_residuals: Vec<EigvecResidual>,
}

impl GramReport {
    pub fn pass(&self) -> bool {
        self.max_offblock < 1e-10
            && self.max_block_deviation < 1e-12
            && self.block_rank == self.indices.len()
            && self.eigvec_residuals.iter().all(|r| r.residual < 1e-10)
    }

    /// The `T1 x T1` block belonging to the first line of the grid.
    pub fn first_block(&self) -> DMatrix<C64> {
        let g = complexify(&self.gram);
        DMatrix::from_fn(self.t1, self.t1, |b, c| g[(self.t0 * b, self.t0 * c)])
    }
}

fn fourier_grid(op: &MeasurementOperator) -> Result<(usize, usize, Vec<usize>)> {
    match (&op.descriptor().source, op.kind()) {
        (BlockSource::Aniso { t0, t1, indices }, OperatorKind::Aniso2d) => {
            Ok((*t0, *t1, indices.clone()))
        }
        (BlockSource::Iso { grid, .. }, OperatorKind::Iso2d) => {
            Ok((*grid, *grid, (0..*grid).collect()))
        }
        _ => Err(invalid("Gram checks need a 2D Fourier sampler")),
    }
}

/// `G[t, u] = Σ_k A[k, t]·conj(A[k, u])`, i.e. the conjugate of `A*A`, so that
/// `exp(+2πiℓt/T1)` is an eigenvector exactly when `ℓ ∈ K1`.
fn gram_complex(op: &MeasurementOperator) -> Result<DMatrix<C64>> {
    let a = op.to_complex_dense()?;
    Ok(a.transpose() * a.map(|z| z.conj()))
}

/// Builds `G` densely and measures its block structure along the
/// exhaustive axis. For isotropic samplers `K1` is reported as all rows, so
/// the pass predicate is expected to fail.
pub fn check_gram_structure(op: &MeasurementOperator) -> Result<GramReport> {
    let (t0, t1, indices) = fourier_grid(op)?;
    let g = gram_complex(op)?;
    let n = t0 * t1;
    let mut max_off: f64 = 0.0;
    let mut max_dev: f64 = 0.0;
    for u in 0..n {
        for v in 0..n {
            let (a, b) = (u % t0, u / t0);
            let (c, d) = (v % t0, v / t0);
            if a != c {
                max_off = max_off.max(g[(u, v)].norm());
            } else {
                // compare against the same entry in line 0
                let r = g[(t0 * b, t0 * d)];
                max_dev = max_dev.max((g[(u, v)] - r).norm());
            }
        }
    }
    let g1 = DMatrix::from_fn(t1, t1, |b, d| g[(t0 * b, t0 * d)]);
    let sv = g1.clone().singular_values();
    let (block_rank, rank_ambiguous) = numerical_rank(&sv, RANK_REL_TOL);
    Ok(GramReport {
        t0,
        t1,
        eigvec_residuals: eigvec_residuals(&g1, &indices),
        indices,
        gram: realify(&g),
        max_offblock: max_off,
        max_block_deviation: max_dev,
        block_rank,
        rank_ambiguous,
    })
}

fn eigvec_residuals(g1: &DMatrix<C64>, k1: &[usize]) -> Vec<EigvecResidual> {
    let t1 = g1.nrows();
    (0..t1)
        .map(|ell| {
            let v = DVector::from_fn(t1, |t, _| {
                let ph = 2.0 * std::f64::consts::PI * ((ell * t) % t1) as f64 / t1 as f64;
                C64::new(ph.cos(), ph.sin())
            });
            let gv = g1 * &v;
            let in_k = k1.contains(&ell);
            let r = if in_k { (&gv - &v).norm() } else { gv.norm() };
            EigvecResidual {
                ell,
                in_k,
                residual: r / v.norm(),
            }
        })
        .collect()
}

/// Residuals of the Fourier vectors `V_ℓ` under the first diagonal block.
pub fn check_eigvecs(op: &MeasurementOperator) -> Result<Vec<EigvecResidual>> {
    let (t0, t1, indices) = fourier_grid(op)?;
    let g = gram_complex(op)?;
    let g1 = DMatrix::from_fn(t1, t1, |b, d| g[(t0 * b, t0 * d)]);
    Ok(eigvec_residuals(&g1, &indices))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankReduction {
    pub a: DMatrix<f64>,
    pub y: Vec<f64>,
    pub rank: usize,
    /// A singular value sits within a factor 10 of the threshold.
    pub ambiguous: bool,
}

/// Replaces `Gx = b` by the `r`-row system `Vᵀx = Σ⁻¹Uᵀb` from a thin SVD,
/// which has the same solution set whenever `b` lies in the range of `G`.
pub fn reduce_rank_deficient(g: &DMatrix<f64>, b: &[f64]) -> Result<RankReduction> {
    if b.len() != g.nrows() {
        return Err(PtlabError::ShapeMismatch(format!(
            "b has {} entries, G has {} rows",
            b.len(),
            g.nrows()
        )));
    }
    let n = g.ncols();
    if g.nrows() == 0 || n == 0 {
        return Ok(RankReduction {
            a: DMatrix::zeros(0, n),
            y: vec![],
            rank: 0,
            ambiguous: false,
        });
    }
    let svd = g.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested Vᵀ");
    let (rank, ambiguous) = numerical_rank(&svd.singular_values, RANK_REL_TOL);
    // nalgebra does not sort singular values, so pick the kept ones explicitly
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let keep = &order[..rank];
    let bv = DVector::from_column_slice(b);
    let a = DMatrix::from_fn(rank, n, |i, j| vt[(keep[i], j)]);
    let y = keep
        .iter()
        .map(|&k| u.column(k).dot(&bv) / svd.singular_values[k])
        .collect();
    Ok(RankReduction {
        a,
        y,
        rank,
        ambiguous,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CheckOutcome {
    Pass,
    Fail,
    NoDecision,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub big_m: usize,
    pub indices: Vec<usize>,
    pub ell: usize,
    pub coeff_set: CoefficientSet,
    pub val_aus: f64,
    pub val_blockdiag: f64,
    pub value_gap: f64,
    /// `‖x_aus − x_bd‖₂ / (1 + ‖x_bd‖₂)` after re-indexing to block order.
    pub solution_gap: f64,
    pub status_aus: SolveStatus,
    pub status_blockdiag: SolveStatus,
    pub success_aus: bool,
    pub success_blockdiag: bool,
    pub outcome: CheckOutcome,
    pub pass: bool,
}

/// Solves the anisotropic problem and the repeated partial-DFT problem for
/// the same grid signal `x0` (given in block order, line `t0` as block `t0`)
/// and compares values and solutions.
pub fn check_equivalence(
    big_m: usize,
    k1: &[usize],
    x0_blocks: &[f64],
    set: CoefficientSet,
    opts: &SolverOptions,
) -> Result<EquivalenceReport> {
    if big_m > 16 {
        return Err(PtlabError::GuardExceeded {
            guard: "equivalence grid size M",
            limit: 16,
            requested: big_m,
        });
    }
    if !matches!(set, CoefficientSet::Complex | CoefficientSet::Box01) {
        return Err(invalid(format!("equivalence check supports COMPLEX and BOX01, not {set}")));
    }
    let dim = set.ambient_dim();
    if x0_blocks.len() != big_m * big_m * dim {
        return Err(PtlabError::ShapeMismatch(format!(
            "x0 has {} reals, expected {}",
            x0_blocks.len(),
            big_m * big_m * dim
        )));
    }
    let mut aus = aniso_sampler_2d(big_m, k1)?;
    let mut bd = make_block_diagonal(
        vec![realify(&partial_dft_block(big_m, k1)?)],
        big_m,
        true,
        Field::Complex,
    )?;
    if set == CoefficientSet::Box01 {
        aus = aus.restrict_to_real_inputs()?;
        bd = bd.restrict_to_real_inputs()?;
    }
    let x0_grid = blocks_to_grid(x0_blocks, big_m, big_m, dim);
    let res_aus = solve_p1(&aus, &aus.apply(&x0_grid)?, set, opts)?;
    let res_bd = solve_p1(&bd, &bd.apply(x0_blocks)?, set, opts)?;

    let x_aus = grid_to_blocks(res_aus.x1.entries(), big_m, big_m, dim);
    let x_bd = res_bd.x1.entries();
    let diff = x_aus
        .iter()
        .zip(x_bd)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let solution_gap = diff / (1.0 + res_bd.x1.norm_l2());
    let value_gap = (res_aus.objective - res_bd.objective).abs();
    let x0_sig = crate::coeffsets::SignalVector::new(x0_blocks.to_vec(), set, big_m, big_m)?;
    let x_aus_sig = crate::coeffsets::SignalVector::new(x_aus.clone(), set, big_m, big_m)?;
    let success_aus = res_aus.status == SolveStatus::Converged && trial_success(&x0_sig, &x_aus_sig)?;
    let success_bd = res_bd.status == SolveStatus::Converged
        && trial_success(&x0_sig, &res_bd.x1)?;

    let both_converged =
        res_aus.status == SolveStatus::Converged && res_bd.status == SolveStatus::Converged;
    let pass = value_gap <= 1e-6 * (1.0 + res_aus.objective)
        && (!(success_aus && success_bd) || solution_gap <= 1e-4);
    let outcome = match (both_converged, pass) {
        (false, _) => CheckOutcome::NoDecision,
        (true, true) => CheckOutcome::Pass,
        (true, false) => CheckOutcome::Fail,
    };
    let ell = x0_sig.count_free().into_iter().max().unwrap_or(0);
    Ok(EquivalenceReport {
        big_m,
        indices: k1.to_vec(),
        ell,
        coeff_set: set,
        val_aus: res_aus.objective,
        val_blockdiag: res_bd.objective,
        value_gap,
        solution_gap,
        status_aus: res_aus.status,
        status_blockdiag: res_bd.status,
        success_aus,
        success_blockdiag: success_bd,
        outcome,
        pass: both_converged && pass,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub big_m: usize,
    pub indices: Vec<usize>,
    /// Max entrywise deviation of `T·A·V` from the dense anisotropic sampler.
    pub max_deviation: f64,
    /// Max entry of `T*T − I`.
    pub t_isometry_error: f64,
    /// Max entry of `VᵀV − I`.
    pub v_isometry_error: f64,
}

impl FactorizationReport {
    pub fn pass(&self) -> bool {
        self.max_deviation < 1e-12 && self.t_isometry_error < 1e-12 && self.v_isometry_error < 1e-12
    }
}

/// Vectorization `V`: grid order `t0 + M·t1` to block order `t0·M + t1`.
pub fn vectorization_matrix(big_m: usize) -> DMatrix<f64> {
    let n = big_m * big_m;
    let mut v = DMatrix::zeros(n, n);
    for a in 0..big_m {
        for b in 0..big_m {
            v[(a * big_m + b, a + big_m * b)] = 1.0;
        }
    }
    v
}

/// Checks `T·A·V = F_aus`, where `A` repeats the partial DFT on each line,
/// `T` is the unitary DFT across lines applied to each sampled row, and `V`
/// is the vectorization permutation.
pub fn check_isometry_factorization(big_m: usize, k1: &[usize]) -> Result<FactorizationReport> {
    if big_m > 32 {
        return Err(PtlabError::GuardExceeded {
            guard: "factorization grid size M",
            limit: 32,
            requested: big_m,
        });
    }
    let m = k1.len();
    let blk = partial_dft_block(big_m, k1)?;
    let n = big_m * big_m;
    let mut a = DMatrix::<C64>::zeros(big_m * m, n);
    for t0 in 0..big_m {
        a.view_mut((t0 * m, t0 * big_m), (m, big_m)).copy_from(&blk);
    }
    // output row k0·m + i collects line rows t0·m + i
    let s = 1.0 / (big_m as f64).sqrt();
    let t = DMatrix::from_fn(big_m * m, big_m * m, |row, col| {
        let (k0, i) = (row / m, row % m);
        let (t0, j) = (col / m, col % m);
        if i != j {
            return C64::new(0.0, 0.0);
        }
        let ph = 2.0 * std::f64::consts::PI * ((k0 * t0) % big_m) as f64 / big_m as f64;
        C64::new(ph.cos(), ph.sin()) * s
    });
    let v = vectorization_matrix(big_m);
    let vc = v.map(|x| C64::new(x, 0.0));
    let composed = &t * &a * &vc;
    let f = aniso_sampler_2d(big_m, k1)?.to_complex_dense()?;
    let max_deviation = (&composed - &f).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tt = t.adjoint() * &t;
    let t_err = (&tt - DMatrix::<C64>::identity(big_m * m, big_m * m))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let vv = v.transpose() * &v;
    let v_err = (&vv - DMatrix::<f64>::identity(n, n)).amax();
    Ok(FactorizationReport {
        big_m,
        indices: k1.to_vec(),
        max_deviation,
        t_isometry_error: t_err,
        v_isometry_error: v_err,
    })
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - k + i {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Smallest `|det|` over all square column minors of the partial DFT block.
/// Positive for prime `M` by Chebotarev's theorem.
pub fn min_column_minor(big_m: usize, k1: &[usize]) -> Result<f64> {
    let blk = partial_dft_block(big_m, k1)?;
    let m = k1.len();
    Ok(combinations(big_m, m)
        .into_iter()
        .map(|cols| {
            let sub = DMatrix::from_fn(m, m, |i, j| blk[(i, cols[j])]);
            sub.determinant().norm()
        })
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub checks: Vec<CheckResult>,
}

fn to_check<T: Serialize>(name: String, pass: bool, detail: &T) -> CheckResult {
    CheckResult {
        name,
        pass,
        detail: serde_json::to_value(detail).unwrap_or(serde_json::Value::Null),
    }
}

/// Random complex instances for the equivalence check, in block order.
pub fn equivalence_instances(big_m: usize, ell: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let sizes = ProblemSizes::new(ell, big_m, big_m, big_m)?;
    let root = SeedStream::new(seed);
    (0..count as u64)
        .map(|i| {
            sample_signal(&sizes, CoefficientSet::Complex, &root.child("equivalence", i))
                .map(|s| s.into_entries())
        })
        .collect()
}

/// Runs the standard suite and collects one entry per check.
pub fn run_all(seed: u64, opts: &SolverOptions) -> Result<VerifyReport> {
    type Job = Box<dyn Fn() -> Result<Vec<CheckResult>> + Send + Sync>;
    let opts = *opts;
    let mut jobs: Vec<Job> = Vec::new();
    for (t, k1) in [
        (4usize, vec![0usize, 2]),
        (4, vec![1, 2, 3]),
        (8, vec![1, 4, 6]),
        (8, vec![0, 3, 5, 7]),
    ] {
        jobs.push(Box::new(move || {
            let r = check_gram_structure(&aniso_sampler_2d_rect(t, t, &k1)?)?;
            Ok(vec![to_check(format!("gram T={t} K1={k1:?}"), r.pass(), &r)])
        }));
    }
    for (m, k1) in [(4usize, vec![0usize, 2]), (8, vec![1, 4, 6])] {
        jobs.push(Box::new(move || {
            let r = check_isometry_factorization(m, &k1)?;
            Ok(vec![to_check(format!("factorization M={m} K1={k1:?}"), r.pass(), &r)])
        }));
    }
    jobs.push(Box::new(move || {
        let mut out = Vec::new();
        for p in [5usize, 7, 11, 13] {
            let mut worst = f64::INFINITY;
            for m in 1..=4 {
                for k in combinations(p, m) {
                    worst = worst.min(min_column_minor(p, &k)?);
                }
            }
            out.push(to_check(
                format!("general position M={p}"),
                worst > 1e-10,
                &serde_json::json!({ "min_abs_minor": worst }),
            ));
        }
        Ok(out)
    }));
    jobs.push(Box::new(move || {
        let mut rng = SeedStream::new(seed).rng("verify-reduce", 0);
        let base = DMatrix::from_fn(3, 6, |_, _| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng));
        let g = DMatrix::from_fn(6, 6, |i, j| base[(i % 3, j)]);
        let x0 = [0.0, 1.5, 0.0, 0.0, -0.7, 0.0];
        let b: Vec<f64> = (0..6).map(|i| (0..6).map(|j| g[(i, j)] * x0[j]).sum()).collect();
        let red = reduce_rank_deficient(&g, &b)?;
        let full = solve_p1(&dense_operator(g.clone(), Field::Real)?, &b, CoefficientSet::Real, &opts)?;
        let reduced = solve_p1(&dense_operator(red.a.clone(), Field::Real)?, &red.y, CoefficientSet::Real, &opts)?;
        let gap = (full.objective - reduced.objective).abs();
        Ok(vec![to_check(
            "rank reduction duplicated rows".into(),
            red.rank == 3 && !red.ambiguous && gap < 1e-8,
            &serde_json::json!({ "rank": red.rank, "ambiguous": red.ambiguous, "value_gap": gap }),
        )])
    }));
    jobs.push(Box::new(move || {
        let inst = equivalence_instances(7, 1, 10, seed)?;
        let reports = inst
            .iter()
            .map(|x0| check_equivalence(7, &[0, 1, 3], x0, CoefficientSet::Complex, &opts))
            .collect::<Result<Vec<_>>>()?;
        let pass = reports.iter().all(|r| r.pass);
        Ok(vec![to_check("equivalence M=7 K1=[0,1,3]".into(), pass, &reports)])
    }));

    let results: Vec<Result<Vec<CheckResult>>> = jobs.par_iter().map(|j| j()).collect();
    let mut checks = Vec::new();
    for r in results {
        checks.extend(r?);
    }
    Ok(VerifyReport {
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::iso_sampler_2d;

    #[test]
    fn gram_block_structure_small() {
        let r = check_gram_structure(&aniso_sampler_2d_rect(4, 4, &[0, 2]).unwrap()).unwrap();
        assert!(r.max_offblock < 1e-12, "{}", r.max_offblock);
        assert!(r.max_block_deviation < 1e-12);
        assert_eq!(r.block_rank, 2);
        assert!(r.pass());
    }

    #[test]
    fn exhaustive_sampler_has_identity_gram() {
        let r = check_gram_structure(&aniso_sampler_2d(4, &[0, 1, 2, 3]).unwrap()).unwrap();
        let g = complexify(&r.gram);
        let id = DMatrix::<C64>::identity(16, 16);
        assert!((g - id).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn eigvec_residuals_in_and_out_of_k() {
        let res = check_eigvecs(&aniso_sampler_2d_rect(3, 8, &[1, 4, 6]).unwrap()).unwrap();
        assert_eq!(res.len(), 8);
        assert!(res.iter().all(|r| r.residual < 1e-10));
        assert_eq!(res.iter().filter(|r| r.in_k).count(), 3);
    }

    #[test]
    fn non_fourier_rejected() {
        let op = dense_operator(DMatrix::identity(3, 3), Field::Real).unwrap();
        assert!(check_gram_structure(&op).is_err());
        // the isotropic sampler is accepted but has no line structure
        let iso = check_gram_structure(&iso_sampler_2d(4, 6, 1).unwrap()).unwrap();
        assert!(iso.max_offblock > 1e-3);
    }

    #[test]
    fn reduction_cases() {
        let opts = SolverOptions::default();
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 3.0]);
        let b = [1.0, -2.0, 0.5];
        let red = reduce_rank_deficient(&g, &b).unwrap();
        assert_eq!(red.rank, 3);
        let v1 = solve_p1(&dense_operator(g, Field::Real).unwrap(), &b, CoefficientSet::Real, &opts).unwrap();
        let v2 = solve_p1(&dense_operator(red.a, Field::Real).unwrap(), &red.y, CoefficientSet::Real, &opts).unwrap();
        assert!((v1.objective - v2.objective).abs() < 1e-8);

        let zero = reduce_rank_deficient(&DMatrix::zeros(2, 4), &[0.0, 0.0]).unwrap();
        assert_eq!(zero.rank, 0);
        assert_eq!(zero.a.nrows(), 0);
    }

    #[test]
    fn ambiguous_rank_flagged() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-10]));
        let red = reduce_rank_deficient(&g, &[1.0, 0.0]).unwrap();
        assert!(red.ambiguous);
    }

    #[test]
    fn factorization_small() {
        let r = check_isometry_factorization(4, &[0, 2]).unwrap();
        assert!(r.pass(), "{r:?}");
        let full = check_isometry_factorization(4, &[0, 1, 2, 3]).unwrap();
        assert!(full.max_deviation < 1e-12);
    }

    #[test]
    fn vectorization_preserves_norms() {
        let v = vectorization_matrix(5);
        let x = DVector::from_fn(25, |i, _| ((i * 7 % 11) as f64) - 5.0);
        let y = &v * &x;
        assert!((x.lp_norm(1) - y.lp_norm(1)).abs() < 1e-12);
        assert!((x.norm() - y.norm()).abs() < 1e-12);
    }

    #[test]
    fn prime_length_general_position() {
        assert!(min_column_minor(7, &[0, 1, 2]).unwrap() > 1e-10);
        // composite length: columns {0, 2} of rows {0, 2} at M = 4 are dependent
        assert!(min_column_minor(4, &[0, 2]).unwrap() < 1e-10);
    }

    #[test]
    fn equivalence_trivial_cases() {
        let opts = SolverOptions::default();
        let zero = vec![0.0; 2 * 25];
        let r = check_equivalence(5, &[0, 2], &zero, CoefficientSet::Complex, &opts).unwrap();
        assert_eq!(r.val_aus, 0.0);
        assert_eq!(r.val_blockdiag, 0.0);
        let inst = equivalence_instances(5, 2, 1, 3).unwrap();
        let full = check_equivalence(5, &[0, 1, 2, 3, 4], &inst[0], CoefficientSet::Complex, &opts).unwrap();
        assert!(full.pass && full.solution_gap < 1e-8, "{full:?}");
        assert!(check_equivalence(17, &[0], &[], CoefficientSet::Complex, &opts).is_err());
    }
}
