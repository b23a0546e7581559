//! Seeded Monte-Carlo campaigns.
//!
//! Trial `t` of a run with master seed `s` draws everything from the child
//! stream `(s, "trial", t)`: the matrix from its `"matrix"` sub-streams (unless
//! the matrix is fixed for the whole run) and the signal from its `"signal"`
//! sub-stream. Trials run in parallel on the current rayon pool and are
//! collected in index order, so results never depend on the worker count.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffsets::{CoefficientSet, SignalVector};
use crate::ensembles::{
    make_block_diagonal, partial_dft_block, partial_real_fourier_block, sample_signal, sample_use,
    Field, MeasurementOperator, ProblemSizes,
};
use crate::error::{invalid, PtlabError, Result};
use crate::linalg::realify;
use crate::predict::{asymptotic_pt, predict_pt, Order};
use crate::rng::SeedStream;
use crate::solver::{relative_error, solve_p1, SolveStatus, SolverOptions, SUCCESS_THRESHOLD};

/// Largest `N = B·M` accepted for multiblock solves.
pub const MAX_TOTAL_COLUMNS: usize = 4096;
/// Largest `M` accepted for single-block campaigns.
pub const MAX_SINGLE_BLOCK: usize = 1024;

/// Measurement ensemble used in a campaign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Ensemble {
    /// One USE block repeated on the diagonal.
    Rbuse,
    /// Independent USE blocks.
    Dbuse,
    /// One partial Fourier block with random rows, repeated.
    Rbpft,
    /// Independent partial Fourier blocks, each with its own random rows.
    Dbpft,
    /// A repeated partial Fourier block with the given rows
    /// (the first `m` rows when omitted).
    Pft {
        #[serde(default)]
        indices: Option<Vec<usize>>,
    },
}

impl Ensemble {
    pub fn id(&self) -> &'static str {
        match self {
            Ensemble::Rbuse => "rbuse",
            Ensemble::Dbuse => "dbuse",
            Ensemble::Rbpft => "rbpft",
            Ensemble::Dbpft => "dbpft",
            Ensemble::Pft { .. } => "pft",
        }
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Ensemble {
    type Err = PtlabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rbuse" => Ok(Ensemble::Rbuse),
            "dbuse" => Ok(Ensemble::Dbuse),
            "rbpft" => Ok(Ensemble::Rbpft),
            "dbpft" => Ok(Ensemble::Dbpft),
            "pft" => Ok(Ensemble::Pft { indices: None }),
            other => Err(invalid(format!("unknown ensemble '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixPolicy {
    /// A new matrix for every trial.
    #[default]
    Fresh,
    /// One matrix shared by all trials of a run.
    Fixed,
}

/// One Monte-Carlo cell: `S` trials at fixed sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sizes: ProblemSizes,
    pub coeff_set: CoefficientSet,
    pub ensemble: Ensemble,
    #[serde(default)]
    pub matrix_policy: MatrixPolicy,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.sizes;
        ProblemSizes::new(s.ell, s.m, s.big_m, s.blocks)?;
        if s.total_cols() > MAX_TOTAL_COLUMNS {
            return Err(PtlabError::GuardExceeded {
                guard: "multiblock columns N = B*M",
                limit: MAX_TOTAL_COLUMNS,
                requested: s.total_cols(),
            });
        }
        if let Ensemble::Pft {
            indices: Some(k),
        } = &self.ensemble
        {
            if k.len() != s.m {
                return Err(PtlabError::InvalidIndices(format!(
                    "fixed rows have {} entries but m = {}",
                    k.len(),
                    s.m
                )));
            }
        }
        self.solver.validate()
    }
}

/// Outcome of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub sizes: ProblemSizes,
    pub ensemble_id: String,
    pub coeff_set: CoefficientSet,
    pub master_seed: u64,
    pub trial_index: u64,
    /// `‖x0 − x1‖/‖x0‖`, or `‖x1‖` when `x0 = 0`.
    pub rel_error: f64,
    /// `rel_error < 0.001` and the solver converged.
    pub success: bool,
    pub status: SolveStatus,
    pub iterations: usize,
    pub wall_time: f64,
}

impl TrialRecord {
    /// Recomputes the success flag from the recorded error and status.
    pub fn recomputed_success(&self) -> bool {
        self.status == SolveStatus::Converged && self.rel_error < SUCCESS_THRESHOLD
    }
}

fn random_rows<R: Rng + ?Sized>(big_m: usize, m: usize, rng: &mut R) -> Vec<usize> {
    let mut k = sample(rng, big_m, m).into_vec();
    k.sort_unstable();
    k
}

fn fourier_block(big_m: usize, k: &[usize], field: Field) -> Result<DMatrix<f64>> {
    match field {
        Field::Real => partial_real_fourier_block(big_m, k),
        Field::Complex => Ok(realify(&partial_dft_block(big_m, k)?)),
    }
}

/// Draws the operator for one trial from `seeds`.
///
/// Real coefficient sets use real blocks (the real orthonormal Fourier basis
/// for Fourier ensembles); complex coefficients use complex blocks.
pub fn build_operator(
    ensemble: &Ensemble,
    sizes: &ProblemSizes,
    set: CoefficientSet,
    seeds: &SeedStream,
) -> Result<MeasurementOperator> {
    let field = Field::for_set(set);
    let (m, big_m, b) = (sizes.m, sizes.big_m, sizes.blocks);
    match ensemble {
        Ensemble::Rbuse => {
            let blk = sample_use(m, big_m, field, &mut seeds.rng("matrix", 0))?;
            make_block_diagonal(vec![blk], b, true, field)
        }
        Ensemble::Dbuse => {
            let blocks = (0..b)
                .map(|i| sample_use(m, big_m, field, &mut seeds.rng("matrix", i as u64)))
                .collect::<Result<Vec<_>>>()?;
            make_block_diagonal(blocks, b, false, field)
        }
        Ensemble::Rbpft => {
            let k = random_rows(big_m, m, &mut seeds.rng("matrix", 0));
            make_block_diagonal(vec![fourier_block(big_m, &k, field)?], b, true, field)
        }
        Ensemble::Dbpft => {
            let blocks = (0..b)
                .map(|i| {
                    let k = random_rows(big_m, m, &mut seeds.rng("matrix", i as u64));
                    fourier_block(big_m, &k, field)
                })
                .collect::<Result<Vec<_>>>()?;
            make_block_diagonal(blocks, b, false, field)
        }
        Ensemble::Pft { indices } => {
            let k = indices.clone().unwrap_or_else(|| (0..m).collect());
            make_block_diagonal(vec![fourier_block(big_m, &k, field)?], b, true, field)
        }
    }
}

fn run_one(
    cfg: &ExperimentConfig,
    fixed: Option<&MeasurementOperator>,
    t: u64,
) -> Result<TrialRecord> {
    let start = Instant::now();
    let master = SeedStream::new(cfg.seed);
    let trial = master.child("trial", t);
    let fresh;
    let op = match fixed {
        Some(op) => op,
        None => {
            fresh = build_operator(&cfg.ensemble, &cfg.sizes, cfg.coeff_set, &trial)?;
            &fresh
        }
    };
    let x0 = sample_signal(&cfg.sizes, cfg.coeff_set, &trial.child("signal", 0))?;
    let y = op.apply(x0.entries())?;
    let res = solve_p1(op, &y, cfg.coeff_set, &cfg.solver)?;
    let rel_error = error_for(&x0, &res.x1)?;
    Ok(TrialRecord {
        sizes: cfg.sizes,
        ensemble_id: cfg.ensemble.id().to_string(),
        coeff_set: cfg.coeff_set,
        master_seed: cfg.seed,
        trial_index: t,
        rel_error,
        success: res.status == SolveStatus::Converged && rel_error < SUCCESS_THRESHOLD,
        status: res.status,
        iterations: res.iterations,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn error_for(x0: &SignalVector, x1: &SignalVector) -> Result<f64> {
    if x0.norm_l2() == 0.0 {
        Ok(x1.norm_l2())
    } else {
        relative_error(x0, x1)
    }
}

/// Runs `S` independent trials.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let fixed = match cfg.matrix_policy {
        MatrixPolicy::Fixed => Some(build_operator(
            &cfg.ensemble,
            &cfg.sizes,
            cfg.coeff_set,
            &SeedStream::new(cfg.seed).child("fixed-matrix", 0),
        )?),
        MatrixPolicy::Fresh => None,
    };
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| run_one(cfg, fixed.as_ref(), t))
        .collect()
}

/// Aggregated cell of a success table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub ell: usize,
    pub m: usize,
    #[serde(rename = "M")]
    pub big_m: usize,
    #[serde(rename = "B")]
    pub blocks: usize,
    #[serde(rename = "S")]
    pub trials: usize,
    /// May be fractional when the cell holds expected counts.
    pub successes: f64,
    pub pi_hat: f64,
    pub ensemble: String,
    pub coeffset: CoefficientSet,
    pub seed: u64,
}

/// Column order of success-table CSV files.
pub const CSV_HEADER: [&str; 10] = [
    "ell", "m", "M", "B", "S", "successes", "pi_hat", "ensemble", "coeffset", "seed",
];

impl CellSummary {
    pub fn from_records(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Self {
        let successes = records.iter().filter(|r| r.success).count() as f64;
        let trials = records.len();
        CellSummary {
            ell: cfg.sizes.ell,
            m: cfg.sizes.m,
            big_m: cfg.sizes.big_m,
            blocks: cfg.sizes.blocks,
            trials,
            successes,
            pi_hat: if trials == 0 { f64::NAN } else { successes / trials as f64 },
            ensemble: cfg.ensemble.id().to_string(),
            coeffset: cfg.coeff_set,
            seed: cfg.seed,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.ell as f64 / self.big_m as f64
    }

    pub fn delta(&self) -> f64 {
        self.m as f64 / self.big_m as f64
    }

    /// Fields in [`CSV_HEADER`] order. Floats use the shortest representation
    /// that parses back to the same value.
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.ell.to_string(),
            self.m.to_string(),
            self.big_m.to_string(),
            self.blocks.to_string(),
            self.trials.to_string(),
            self.successes.to_string(),
            self.pi_hat.to_string(),
            self.ensemble.clone(),
            self.coeffset.label().to_string(),
            self.seed.to_string(),
        ]
    }

    pub fn from_csv_fields(fields: &[&str]) -> Result<Self> {
        if fields.len() != CSV_HEADER.len() {
            return Err(invalid(format!(
                "expected {} columns, found {}",
                CSV_HEADER.len(),
                fields.len()
            )));
        }
        let int = |i: usize| {
            fields[i]
                .trim()
                .parse::<usize>()
                .map_err(|e| invalid(format!("column {}: {e}", CSV_HEADER[i])))
        };
        let float = |i: usize| {
            fields[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| invalid(format!("column {}: {e}", CSV_HEADER[i])))
        };
        Ok(CellSummary {
            ell: int(0)?,
            m: int(1)?,
            big_m: int(2)?,
            blocks: int(3)?,
            trials: int(4)?,
            successes: float(5)?,
            pi_hat: float(6)?,
            ensemble: fields[7].trim().to_string(),
            coeffset: fields[8].parse()?,
            seed: fields[9]
                .trim()
                .parse()
                .map_err(|e| invalid(format!("column seed: {e}")))?,
        })
    }
}

/// Rows of `(ℓ, m, M, B, S, successes, π̂)` for one `(m, M, B)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SuccessTable {
    pub rows: Vec<CellSummary>,
}

/// A sweep over `ℓ` at fixed `(m, M, B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Template; its `ell` is ignored.
    pub base: ExperimentConfig,
    /// Explicit `ℓ` values. When absent, a window around the prediction.
    #[serde(default)]
    pub ells: Option<Vec<usize>>,
    /// Half-width of the automatic window, in units of `ℓ`.
    #[serde(default)]
    pub half_width: Option<usize>,
}

/// Predicted transition in units of `ℓ`: the order-2 finite-N value when it
/// is defined, otherwise the asymptotic curve.
pub fn predicted_center(sizes: &ProblemSizes, set: CoefficientSet) -> Result<f64> {
    let (m, big_m, b) = (sizes.m as u64, sizes.big_m as u64, sizes.blocks as u64);
    let eps = match predict_pt(m, big_m, b, set, Order::Second) {
        Ok(p) => p.eps_bd_second,
        Err(_) => asymptotic_pt(sizes.delta(), set)?,
    };
    Ok(eps.max(0.0) * sizes.big_m as f64)
}

/// The `ℓ` values a grid run will visit.
pub fn grid_ells(grid: &GridConfig) -> Result<Vec<usize>> {
    let sizes = &grid.base.sizes;
    if let Some(ells) = &grid.ells {
        if let Some(&bad) = ells.iter().find(|&&l| l > sizes.big_m) {
            return Err(invalid(format!("ell = {bad} exceeds M = {}", sizes.big_m)));
        }
        return Ok(ells.clone());
    }
    let center = predicted_center(sizes, grid.base.coeff_set)?.round() as i64;
    let w = grid.half_width.unwrap_or((sizes.big_m / 4).max(3)) as i64;
    let lo = (center - w).max(0);
    let hi = (center + w).min(sizes.big_m as i64);
    Ok((lo..=hi).map(|l| l as usize).collect())
}

/// Runs every cell of a grid. Cell `ℓ` uses master seed
/// `(seed, "cell", ℓ)` so that cells are independent.
pub fn run_phase_grid(grid: &GridConfig) -> Result<SuccessTable> {
    let ells = grid_ells(grid)?;
    let root = SeedStream::new(grid.base.seed);
    let mut rows = Vec::with_capacity(ells.len());
    for ell in ells {
        let mut cfg = grid.base.clone();
        cfg.sizes.ell = ell;
        cfg.seed = root.child("cell", ell as u64).master();
        let records = run_trials(&cfg)?;
        rows.push(CellSummary::from_records(&cfg, &records));
    }
    Ok(SuccessTable { rows })
}

/// Single-block failure statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    /// Mean failure indicator `Ȳ`.
    pub y_bar: f64,
    /// Failure count `T = S·Ȳ`.
    pub failures: usize,
    pub trials: usize,
}

/// `S` single-block solves described by `cfg` (which must have `B = 1`);
/// returns the failure fraction.
pub fn single_block_campaign(cfg: &ExperimentConfig) -> Result<CampaignResult> {
    if cfg.sizes.blocks != 1 {
        return Err(invalid(format!("single-block campaign needs B = 1, got {}", cfg.sizes.blocks)));
    }
    if cfg.sizes.big_m > MAX_SINGLE_BLOCK {
        return Err(PtlabError::GuardExceeded {
            guard: "single-block size M",
            limit: MAX_SINGLE_BLOCK,
            requested: cfg.sizes.big_m,
        });
    }
    let trials = cfg.trials;
    let records = run_trials(cfg)?;
    let failures = records.iter().filter(|r| !r.success).count();
    Ok(CampaignResult {
        y_bar: if trials == 0 { 0.0 } else { failures as f64 / trials as f64 },
        failures,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(ell: usize, m: usize, big_m: usize, b: usize, set: CoefficientSet, s: usize) -> ExperimentConfig {
        ExperimentConfig {
            sizes: ProblemSizes::new(ell, m, big_m, b).unwrap(),
            coeff_set: set,
            ensemble: Ensemble::Dbuse,
            matrix_policy: MatrixPolicy::Fresh,
            trials: s,
            seed: 99,
            solver: SolverOptions::default(),
        }
    }

    fn strip(r: &[TrialRecord]) -> Vec<(u64, f64, bool, SolveStatus)> {
        r.iter().map(|t| (t.trial_index, t.rel_error, t.success, t.status)).collect()
    }

    #[test]
    fn zero_trials_is_empty() {
        assert!(run_trials(&cfg(2, 4, 8, 2, CoefficientSet::Real, 0)).unwrap().is_empty());
    }

    #[test]
    fn runs_are_deterministic_across_pool_sizes() {
        let c = cfg(3, 6, 10, 3, CoefficientSet::Real, 24);
        let a = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_trials(&c)).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| run_trials(&c)).unwrap();
        assert_eq!(strip(&a), strip(&b));
        assert!(a.iter().all(|r| r.success == r.recomputed_success()));
    }

    #[test]
    fn zero_signal_cells_always_succeed() {
        for set in CoefficientSet::ALL {
            if set == CoefficientSet::Box01 {
                continue;
            }
            let recs = run_trials(&cfg(0, 3, 8, 2, set, 10)).unwrap();
            assert!(recs.iter().all(|r| r.success), "{set}");
        }
    }

    #[test]
    fn guards_are_enforced() {
        let c = cfg(1, 40, 80, 60, CoefficientSet::Real, 1);
        assert!(matches!(run_trials(&c), Err(PtlabError::GuardExceeded { .. })));
        let r = single_block_campaign(&cfg(1, 3, 2000, 1, CoefficientSet::Real, 1));
        assert!(matches!(r, Err(PtlabError::GuardExceeded { .. })));
    }

    #[test]
    fn trivial_campaigns() {
        let r = single_block_campaign(&cfg(0, 3, 6, 1, CoefficientSet::Real, 20)).unwrap();
        assert_eq!(r.y_bar, 0.0);
        let r = single_block_campaign(&cfg(4, 6, 6, 1, CoefficientSet::Box01, 20)).unwrap();
        assert_eq!(r.y_bar, 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let c = cfg(2, 4, 8, 2, CoefficientSet::Complex, 5);
        let recs = run_trials(&c).unwrap();
        let row = CellSummary::from_records(&c, &recs);
        let fields = row.csv_fields();
        let refs: Vec<&str> = fields.iter().map(|s| s.as_str()).collect();
        assert_eq!(CellSummary::from_csv_fields(&refs).unwrap(), row);
        assert_eq!(row.pi_hat, row.successes / 5.0);
    }

    #[test]
    fn fixed_rows_are_validated() {
        let mut c = cfg(1, 3, 5, 1, CoefficientSet::Real, 1);
        c.ensemble = Ensemble::Pft {
            indices: Some(vec![0, 1]),
        };
        assert!(run_trials(&c).is_err());
    }

    #[test]
    fn automatic_window_brackets_prediction() {
        let grid = GridConfig {
            base: cfg(0, 16, 32, 4, CoefficientSet::Real, 1),
            ells: None,
            half_width: Some(4),
        };
        let ells = grid_ells(&grid).unwrap();
        let c = predicted_center(&grid.base.sizes, CoefficientSet::Real).unwrap();
        assert_eq!(ells.len(), 9);
        assert!((ells[4] as f64 - c).abs() <= 0.5);
    }
}
