//! Coefficient ground sets and the norm, constraint, and proximal semantics
//! they induce.
//!
//! Complex coefficients are stored as interleaved `(re, im)` pairs so the whole
//! stack runs on real arithmetic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PtlabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientSet {
    /// The unit interval `[0, 1]`.
    Box01,
    /// The half-line `[0, inf)`.
    NonNeg,
    Real,
    Complex,
}

impl CoefficientSet {
    pub const ALL: [CoefficientSet; 4] = [
        CoefficientSet::Box01,
        CoefficientSet::NonNeg,
        CoefficientSet::Real,
        CoefficientSet::Complex,
    ];

    /// Real dimension of one coefficient.
    pub fn ambient_dim(self) -> usize {
        match self {
            CoefficientSet::Complex => 2,
            _ => 1,
        }
    }

    pub fn is_complex(self) -> bool {
        self == CoefficientSet::Complex
    }

    /// Short label used in CSV output.
    pub fn label(self) -> &'static str {
        match self {
            CoefficientSet::Box01 => "box01",
            CoefficientSet::NonNeg => "nonneg",
            CoefficientSet::Real => "real",
            CoefficientSet::Complex => "complex",
        }
    }

    /// Whether a single coefficient (one or two reals) lies in the set.
    pub fn contains(self, coeff: &[f64]) -> bool {
        match self {
            CoefficientSet::Box01 => (0.0..=1.0).contains(&coeff[0]),
            CoefficientSet::NonNeg => coeff[0] >= 0.0,
            CoefficientSet::Real => coeff[0].is_finite(),
            CoefficientSet::Complex => coeff[0].is_finite() && coeff[1].is_finite(),
        }
    }

    /// Whether a coefficient is free, i.e. not on the boundary of the set.
    /// Exact comparison; only meant for generated signals.
    pub fn is_free(self, coeff: &[f64]) -> bool {
        match self {
            CoefficientSet::Box01 => coeff[0] != 0.0 && coeff[0] != 1.0,
            CoefficientSet::NonNeg | CoefficientSet::Real => coeff[0] != 0.0,
            CoefficientSet::Complex => coeff[0] != 0.0 || coeff[1] != 0.0,
        }
    }
}

impl fmt::Display for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CoefficientSet {
    type Err = PtlabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "box01" | "[0,1]" | "box" | "b" => Ok(CoefficientSet::Box01),
            "nonneg" | "r+" | "positive" | "p" => Ok(CoefficientSet::NonNeg),
            "real" | "r" => Ok(CoefficientSet::Real),
            "complex" | "c" => Ok(CoefficientSet::Complex),
            other => Err(invalid(format!("unknown coefficient set '{other}'"))),
        }
    }
}

/// `‖x‖_{1,X}` over a raw real-representation slice.
pub fn norm_l1x_slice(set: CoefficientSet, x: &[f64]) -> f64 {
    match set {
        CoefficientSet::Complex => x.chunks_exact(2).map(|p| p[0].hypot(p[1])).sum(),
        _ => x.iter().map(|v| v.abs()).sum(),
    }
}

/// In-place proximal step `argmin_z t‖z‖_{1,X} + ½‖z − x‖²` restricted to `X`.
pub fn prox_in_place(set: CoefficientSet, x: &mut [f64], t: f64) {
    match set {
        CoefficientSet::Box01 => {
            for v in x.iter_mut() {
                *v = (*v - t).clamp(0.0, 1.0);
            }
        }
        CoefficientSet::NonNeg => {
            for v in x.iter_mut() {
                *v = (*v - t).max(0.0);
            }
        }
        CoefficientSet::Real => {
            for v in x.iter_mut() {
                let mag = v.abs() - t;
                *v = if mag > 0.0 { mag.copysign(*v) } else { 0.0 };
            }
        }
        CoefficientSet::Complex => {
            for p in x.chunks_exact_mut(2) {
                let r = p[0].hypot(p[1]);
                let scale = if r > t { 1.0 - t / r } else { 0.0 };
                p[0] *= scale;
                p[1] *= scale;
            }
        }
    }
}

/// A block-structured signal `x = [x^(1) | … | x^(B)]` over a coefficient set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalVector {
    entries: Vec<f64>,
    coeff_set: CoefficientSet,
    block_size: usize,
    num_blocks: usize,
}

impl SignalVector {
    pub fn new(
        entries: Vec<f64>,
        coeff_set: CoefficientSet,
        block_size: usize,
        num_blocks: usize,
    ) -> Result<Self> {
        let k = coeff_set.ambient_dim();
        let want = block_size * num_blocks * k;
        if entries.len() != want {
            return Err(PtlabError::ShapeMismatch(format!(
                "signal has {} reals, expected {want} ({block_size}x{num_blocks} coefficients of dim {k})",
                entries.len()
            )));
        }
        if let Some(i) = entries.chunks_exact(k).position(|c| !coeff_set.contains(c)) {
            return Err(invalid(format!("coefficient {i} lies outside {coeff_set}")));
        }
        Ok(Self {
            entries,
            coeff_set,
            block_size,
            num_blocks,
        })
    }

    /// Builds a signal without the membership check. Used for solver outputs,
    /// which may sit within rounding of the set boundary.
    pub(crate) fn from_raw(
        entries: Vec<f64>,
        coeff_set: CoefficientSet,
        block_size: usize,
        num_blocks: usize,
    ) -> Self {
        debug_assert_eq!(entries.len(), block_size * num_blocks * coeff_set.ambient_dim());
        Self {
            entries,
            coeff_set,
            block_size,
            num_blocks,
        }
    }

    pub fn zeros(coeff_set: CoefficientSet, block_size: usize, num_blocks: usize) -> Self {
        Self::from_raw(
            vec![0.0; block_size * num_blocks * coeff_set.ambient_dim()],
            coeff_set,
            block_size,
            num_blocks,
        )
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    pub fn coeff_set(&self) -> CoefficientSet {
        self.coeff_set
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    /// Number of coefficients (not reals).
    pub fn len(&self) -> usize {
        self.block_size * self.num_blocks
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Real-representation slice of block `b`.
    pub fn block(&self, b: usize) -> &[f64] {
        let w = self.block_size * self.coeff_set.ambient_dim();
        &self.entries[b * w..(b + 1) * w]
    }

    pub fn norm_l1x(&self) -> f64 {
        norm_l1x_slice(self.coeff_set, &self.entries)
    }

    pub fn norm_l2(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn prox_step(&self, t: f64) -> Result<SignalVector> {
        if t.is_nan() || t <= 0.0 {
            return Err(invalid(format!("prox step needs t > 0, got {t}")));
        }
        let mut out = self.entries.clone();
        prox_in_place(self.coeff_set, &mut out, t);
        Ok(Self::from_raw(out, self.coeff_set, self.block_size, self.num_blocks))
    }

    /// Count of free (non-boundary) coefficients in each block.
    pub fn count_free(&self) -> Vec<usize> {
        let k = self.coeff_set.ambient_dim();
        (0..self.num_blocks)
            .map(|b| {
                self.block(b)
                    .chunks_exact(k)
                    .filter(|c| self.coeff_set.is_free(c))
                    .count()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(set: CoefficientSet, v: Vec<f64>) -> SignalVector {
        let n = v.len() / set.ambient_dim();
        SignalVector::new(v, set, n, 1).unwrap()
    }

    #[test]
    fn norm_examples() {
        assert_eq!(SignalVector::zeros(CoefficientSet::Real, 5, 2).norm_l1x(), 0.0);
        assert_eq!(sig(CoefficientSet::Real, vec![1.0, -2.0, 0.5]).norm_l1x(), 3.5);
        assert_eq!(sig(CoefficientSet::Complex, vec![3.0, 4.0]).norm_l1x(), 5.0);
    }

    #[test]
    fn prox_examples() {
        let p = sig(CoefficientSet::Real, vec![2.0]).prox_step(0.5).unwrap();
        assert_eq!(p.entries(), &[1.5]);
        let p = sig(CoefficientSet::Real, vec![0.3]).prox_step(0.5).unwrap();
        assert_eq!(p.entries(), &[0.0]);
        // unconstrained minimiser 1.4 clips to the box
        let mut v = [1.9];
        prox_in_place(CoefficientSet::Box01, &mut v, 0.5);
        assert_eq!(v, [1.0]);
        assert!(sig(CoefficientSet::Real, vec![1.0]).prox_step(0.0).is_err());
    }

    #[test]
    fn count_free_examples() {
        let b = sig(CoefficientSet::Box01, vec![0.0, 1.0, 0.5, 1.0]);
        assert_eq!(b.count_free(), vec![1]);
        assert_eq!(SignalVector::zeros(CoefficientSet::Real, 3, 1).count_free(), vec![0]);
        let n = sig(CoefficientSet::NonNeg, vec![0.0, 2.2, 0.1]);
        assert_eq!(n.count_free(), vec![2]);
    }

    #[test]
    fn membership_is_enforced() {
        assert!(SignalVector::new(vec![1.5], CoefficientSet::Box01, 1, 1).is_err());
        assert!(SignalVector::new(vec![-0.1], CoefficientSet::NonNeg, 1, 1).is_err());
        assert!(SignalVector::new(vec![1.0, 2.0], CoefficientSet::Real, 1, 1).is_err());
    }

    #[test]
    fn parse_labels() {
        assert_eq!("C".parse::<CoefficientSet>().unwrap(), CoefficientSet::Complex);
        assert_eq!("[0,1]".parse::<CoefficientSet>().unwrap(), CoefficientSet::Box01);
        assert_eq!("R+".parse::<CoefficientSet>().unwrap(), CoefficientSet::NonNeg);
        assert!("quaternion".parse::<CoefficientSet>().is_err());
    }

    /// Brute-force 1D prox on a grid of step 1e-4.
    fn grid_prox(set: CoefficientSet, x: f64, t: f64) -> f64 {
        let (lo, hi) = match set {
            CoefficientSet::Box01 => (0.0, 1.0),
            CoefficientSet::NonNeg => (0.0, x.abs() + 1.0),
            _ => (-x.abs() - 1.0, x.abs() + 1.0),
        };
        let steps = ((hi - lo) / 1e-4).ceil() as usize;
        (0..=steps)
            .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
            .map(|z| (t * z.abs() + 0.5 * (z - x) * (z - x), z))
            .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a })
            .1
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prox_matches_grid(x in -3.0f64..3.0, t in 0.01f64..2.0) {
            for set in [CoefficientSet::Box01, CoefficientSet::NonNeg, CoefficientSet::Real] {
                let mut v = [x];
                prox_in_place(set, &mut v, t);
                prop_assert!((v[0] - grid_prox(set, x, t)).abs() < 1e-3);
            }
        }

        #[test]
        fn complex_prox_matches_radial_grid(re in -3.0f64..3.0, im in -3.0f64..3.0, t in 0.01f64..2.0) {
            // The complex prox acts radially; a 1D grid over the modulus suffices.
            let r = re.hypot(im);
            let want = grid_prox(CoefficientSet::NonNeg, r, t);
            let mut v = [re, im];
            prox_in_place(CoefficientSet::Complex, &mut v, t);
            prop_assert!((v[0].hypot(v[1]) - want).abs() < 1e-3);
        }

        #[test]
        fn real_prox_is_odd(x in -5.0f64..5.0, t in 0.01f64..2.0) {
            let mut a = [x];
            let mut b = [-x];
            prox_in_place(CoefficientSet::Real, &mut a, t);
            prox_in_place(CoefficientSet::Real, &mut b, t);
            prop_assert_eq!(a[0], -b[0]);
        }
    }

    #[test]
    fn norm_homogeneous_and_subadditive() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for set in CoefficientSet::ALL {
            for _ in 0..1000 {
                let n = 6 * set.ambient_dim();
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let c: f64 = rng.random_range(-3.0..3.0);
                let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
                let s: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
                let nx = norm_l1x_slice(set, &x);
                assert!((norm_l1x_slice(set, &cx) - c.abs() * nx).abs() < 1e-12);
                assert!(norm_l1x_slice(set, &s) <= nx + norm_l1x_slice(set, &y) + 1e-12);
            }
        }
    }
}
