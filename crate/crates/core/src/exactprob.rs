//! Exact success probabilities for `[0,1]` coefficients under block-diagonal
//! USE sampling, and the asymptotics around them.
//!
//! Binomial tails use the convention `P_{k,n} = 2^{−(n−1)} Σ_{j<k} C(n−1, j)`,
//! for which `P_{n/2,n} = 1/2` exactly. The single-block probability is
//! `Q_sb(ℓ,m,M) = 1 − P_{M−m, M−ℓ}`, and `B` independent blocks give
//! `Q_mb = Q_sb^B`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, PtlabError, Result};

/// Once the running product passes `RESCALE` it is divided by exactly
/// `2^RESCALE_LOG2`, which keeps it in range without rounding.
const RESCALE: f64 = 1.0e150;
const RESCALE_LOG2: i64 = 498;

/// A binomial tail value together with its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialTail {
    pub k: u64,
    pub n: u64,
    pub value: f64,
}

impl BinomialTail {
    pub fn new(k: u64, n: u64) -> Result<Self> {
        Ok(Self {
            k,
            n,
            value: binom_tail(k, n)?,
        })
    }
}

fn neumaier_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

/// `P_{k,n}` for `2k < n`, as `mantissa · 2^exponent`.
///
/// The largest term `C(n−1, k−1)` is built as a running product with explicit
/// binary exponent; the remaining terms follow by the ratio recurrence and are
/// summed with compensation.
fn lower_tail_scaled(k: u64, n: u64) -> (f64, i64) {
    debug_assert!(k >= 1 && 2 * k < n);
    let top = n - 1;
    let j_max = k - 1;
    let mut mant = 1.0f64;
    let mut exp2: i64 = -(top as i64);
    for i in 1..=j_max {
        mant *= (top - j_max + i) as f64;
        mant /= i as f64;
        if mant > RESCALE {
            mant *= 2f64.powi(-(RESCALE_LOG2 as i32));
            exp2 += RESCALE_LOG2;
        }
    }
    let mut ratio = 1.0f64;
    let mut j = j_max;
    let ratios = std::iter::once(1.0).chain(std::iter::from_fn(move || {
        if j == 0 {
            return None;
        }
        ratio *= j as f64 / (top - j + 1) as f64;
        j -= 1;
        if ratio < 1e-20 {
            None
        } else {
            Some(ratio)
        }
    }));
    (mant * neumaier_sum(ratios), exp2)
}

fn scale_pow2(x: f64, e: i64) -> f64 {
    let mut x = x;
    let mut e = e;
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
        if x == 0.0 {
            return 0.0;
        }
    }
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    x * 2f64.powi(e as i32)
}

fn check_tail_args(k: u64, n: u64) -> Result<()> {
    if n == 0 || k > n {
        return Err(invalid(format!("binomial tail needs 0 <= k <= n, n >= 1; got k={k}, n={n}")));
    }
    Ok(())
}

/// `P_{k,n} = 2^{−(n−1)} Σ_{j=0}^{k−1} C(n−1, j)`.
pub fn binom_tail(k: u64, n: u64) -> Result<f64> {
    check_tail_args(k, n)?;
    Ok(if k == 0 {
        0.0
    } else if k == n {
        1.0
    } else if 2 * k == n {
        0.5
    } else if 2 * k < n {
        let (m, e) = lower_tail_scaled(k, n);
        scale_pow2(m, e)
    } else {
        let (m, e) = lower_tail_scaled(n - k, n);
        1.0 - scale_pow2(m, e)
    })
}

/// Natural log of `P_{k,n}`; finite even when `P_{k,n}` underflows.
pub fn log_binom_tail(k: u64, n: u64) -> Result<f64> {
    check_tail_args(k, n)?;
    Ok(if k == 0 {
        f64::NEG_INFINITY
    } else if k == n {
        0.0
    } else if 2 * k == n {
        -std::f64::consts::LN_2
    } else if 2 * k < n {
        let (m, e) = lower_tail_scaled(k, n);
        m.ln() + e as f64 * std::f64::consts::LN_2
    } else {
        let (m, e) = lower_tail_scaled(n - k, n);
        (-scale_pow2(m, e)).ln_1p()
    })
}

fn check_sizes(ell: u64, m: u64, big_m: u64) -> Result<()> {
    if big_m == 0 || m == 0 || m > big_m || ell > big_m {
        return Err(invalid(format!(
            "need 0 <= ell <= M and 1 <= m <= M; got ell={ell}, m={m}, M={big_m}"
        )));
    }
    Ok(())
}

/// Natural log of the single-block success probability.
pub fn log_q_sb(ell: u64, m: u64, big_m: u64) -> Result<f64> {
    check_sizes(ell, m, big_m)?;
    if m == big_m {
        return Ok(0.0);
    }
    if ell >= m {
        return Ok(f64::NEG_INFINITY);
    }
    // 1 − P_{M−m, M−ℓ} = P_{m−ℓ, M−ℓ}
    log_binom_tail(m - ell, big_m - ell)
}

/// Single-block success probability `Q_sb(ℓ, m, M)`.
pub fn q_sb_exact(ell: u64, m: u64, big_m: u64) -> Result<f64> {
    check_sizes(ell, m, big_m)?;
    if m == big_m {
        return Ok(1.0);
    }
    if ell >= m {
        return Ok(0.0);
    }
    binom_tail(m - ell, big_m - ell)
}

/// Multi-block success probability `Q_sb^B`, evaluated as `exp(B·log Q_sb)`.
pub fn q_mb_exact(ell: u64, m: u64, big_m: u64, blocks: u64) -> Result<f64> {
    if blocks == 0 {
        return Err(invalid("need B >= 1"));
    }
    if blocks == 1 {
        return q_sb_exact(ell, m, big_m);
    }
    Ok((blocks as f64 * log_q_sb(ell, m, big_m)?).exp())
}

/// Default target probability: `1/2` for one block, `1 − 1/e` otherwise.
pub fn default_q_star(blocks: u64) -> f64 {
    if blocks <= 1 {
        0.5
    } else {
        1.0 - (-1.0f64).exp()
    }
}

/// Location of the finite-N phase transition for `[0,1]` coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalSparsity {
    /// Largest `ℓ` with `Q_mb(ℓ) ≥ q*`.
    pub ell_star: u64,
    /// Smallest `ℓ` with `Q_mb(ℓ) < q*`; absent when every `ℓ` succeeds.
    pub ell_below: Option<u64>,
    /// `ℓ*/M`.
    pub eps_star: f64,
    /// Continuum approximation; absent when `z_B` is undefined.
    pub ell0: Option<f64>,
    pub z_b: Option<f64>,
    pub q_star: f64,
    pub q_at_star: f64,
    pub q_below: Option<f64>,
}

/// Brackets `q*` between consecutive integers `ℓ*` and `ℓ* + 1`.
///
/// `Q_mb` is nonincreasing in `ℓ`, so bisection over `0..=M` applies.
pub fn critical_ell(m: u64, big_m: u64, blocks: u64, q_star: f64) -> Result<CriticalSparsity> {
    if !(q_star > 0.0 && q_star < 1.0) {
        return Err(invalid(format!("q* must lie in (0, 1), got {q_star}")));
    }
    let q = |ell: u64| q_mb_exact(ell, m, big_m, blocks);
    let q_max = q(0)?;
    let q_min = q(big_m)?;
    if q_max < q_star {
        return Err(PtlabError::NoBracket {
            q_star,
            q_min,
            q_max,
        });
    }
    let (ell_star, ell_below) = if q_min >= q_star {
        (big_m, None)
    } else {
        // invariant: q(lo) >= q*, q(hi) < q*
        let (mut lo, mut hi) = (0u64, big_m);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if q(mid)? >= q_star {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, Some(hi))
    };
    let z_b = z_b(blocks, q_star).ok();
    let ell0 = z_b.map(|z| ell0_from_z(m, big_m, z));
    Ok(CriticalSparsity {
        ell_star,
        ell_below,
        eps_star: ell_star as f64 / big_m as f64,
        ell0,
        z_b,
        q_star,
        q_at_star: q(ell_star)?,
        q_below: ell_below.map(q).transpose()?,
    })
}

/// `z_B = Φ⁻¹(ln(1/q*)/B)`.
pub fn z_b(blocks: u64, q_star: f64) -> Result<f64> {
    if blocks == 0 {
        return Err(invalid("need B >= 1"));
    }
    let p = (1.0 / q_star).ln() / blocks as f64;
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!(
            "ln(1/q*)/B = {p} lies outside (0, 1); z_B undefined"
        )));
    }
    Ok(std_normal().inverse_cdf(p))
}

fn ell0_from_z(m: u64, big_m: u64, z: f64) -> f64 {
    let (m, big_m) = (m as f64, big_m as f64);
    let z2 = z * z;
    2.0 * m - big_m - 0.5 * (z2 * z2 + 8.0 * z2 * (big_m - m)).sqrt() - z2 / 2.0
}

/// Continuum approximation
/// `ℓ₀ = 2m − M − ½√(z⁴ + 8z²(M−m)) − z²/2` with `z = z_B`.
pub fn continuum_ell0(m: u64, big_m: u64, blocks: u64, q_star: f64) -> Result<f64> {
    if m == 0 || m > big_m {
        return Err(invalid(format!("need 1 <= m <= M, got m={m}, M={big_m}")));
    }
    Ok(ell0_from_z(m, big_m, z_b(blocks, q_star)?))
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// `Φ((2k − n)/√n)`.
pub fn normal_approx(k: u64, n: u64) -> f64 {
    let n_f = n as f64;
    std_normal().cdf((2.0 * k as f64 - n_f) / n_f.sqrt())
}

/// Right-hand side of the Uspensky bound, `0.26/n + e^{−√n}`.
pub fn uspensky_gap(k: u64, n: u64) -> Result<f64> {
    if n == 0 || 2 * k >= n || k == 0 {
        return Err(invalid(format!("Uspensky bound needs 0 < k < n/2, got k={k}, n={n}")));
    }
    let n = n as f64;
    Ok(0.26 / n + (-n.sqrt()).exp())
}

/// Checks `|P_{k,n} − Φ_{k,n}| ≤ 0.26/n + e^{−√n} + 2^{−(n−1)}C(n−1,k)`.
///
/// The bound is stated for `2^{−n}Σ_{h≤k}C(n,h)`, which differs from
/// [`binom_tail`] by one index; the last term absorbs that shift.
pub fn uspensky_holds(k: u64, n: u64) -> Result<bool> {
    let bound = uspensky_gap(k, n)?;
    let shift = binom_tail(k + 1, n)? - binom_tail(k, n)?;
    Ok((binom_tail(k, n)? - normal_approx(k, n)).abs() <= bound + shift)
}

/// Checks `P_{k,n+h} ≤ P_{k,n}·2^{−h}(1 − k/n)^{−h}` with a relative slack of
/// `1e-12` for rounding.
pub fn tail_decay_check(k: u64, n: u64, h: u64) -> Result<bool> {
    if k == 0 || 2 * k >= n {
        return Err(invalid(format!("tail decay needs 0 < k < n/2, got k={k}, n={n}")));
    }
    let lhs = log_binom_tail(k, n + h)?;
    let h_f = h as f64;
    let rhs = log_binom_tail(k, n)? - h_f * std::f64::consts::LN_2
        - h_f * (1.0 - k as f64 / n as f64).ln();
    Ok(lhs <= rhs + 1e-12)
}

/// One row of an exact-probability table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactRow {
    pub ell: u64,
    pub q_sb: f64,
    pub q_mb: f64,
}

/// `(ℓ, Q_sb, Q_mb)` for every `ℓ ∈ 0..=M`.
pub fn exact_table(m: u64, big_m: u64, blocks: u64) -> Result<Vec<ExactRow>> {
    (0..=big_m)
        .map(|ell| {
            Ok(ExactRow {
                ell,
                q_sb: q_sb_exact(ell, m, big_m)?,
                q_mb: q_mb_exact(ell, m, big_m, blocks)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tail_examples() {
        for n in 1..20 {
            assert_eq!(binom_tail(0, n).unwrap(), 0.0);
        }
        for n in (2..=64).step_by(2) {
            assert_eq!(binom_tail(n / 2, n).unwrap(), 0.5);
        }
        assert_eq!(binom_tail(1, 2).unwrap(), 0.5);
        assert!(binom_tail(3, 2).is_err());
        assert!(binom_tail(0, 0).is_err());
    }

    #[test]
    fn tail_is_monotone() {
        for n in [5u64, 16, 33, 200, 4096] {
            let vals: Vec<f64> = (0..=n).map(|k| binom_tail(k, n).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[0] <= w[1]), "n={n}");
        }
    }

    #[test]
    fn q_sb_examples() {
        assert_eq!(q_sb_exact(3, 5, 5).unwrap(), 1.0);
        assert_eq!(q_sb_exact(2, 3, 4).unwrap(), 0.5);
        assert_eq!(q_sb_exact(1, 3, 4).unwrap(), 0.75);
        assert!(q_sb_exact(5, 3, 4).is_err());
    }

    #[test]
    fn q_mb_examples() {
        assert_eq!(q_mb_exact(1, 3, 4, 1).unwrap(), q_sb_exact(1, 3, 4).unwrap());
        assert_relative_eq!(q_mb_exact(2, 3, 4, 3).unwrap(), 0.125, max_relative = 1e-14);
        assert_eq!(q_mb_exact(7, 9, 9, 50).unwrap(), 1.0);
    }

    #[test]
    fn critical_examples() {
        let c = critical_ell(4, 6, 1, 0.5).unwrap();
        assert_eq!(c.ell_star, 2);
        assert_eq!(c.q_at_star, 0.5);
        assert_eq!(critical_ell(5, 5, 1, 0.5).unwrap().ell_star, 5);

        let q_star = default_q_star(48);
        let c = critical_ell(36, 48, 48, q_star).unwrap();
        let scan = (0..=48u64)
            .filter(|&l| q_mb_exact(l, 36, 48, 48).unwrap() >= q_star)
            .max()
            .unwrap();
        assert_eq!(c.ell_star, scan);
        assert!(c.q_at_star >= q_star && c.q_below.unwrap() < q_star);
        assert!(critical_ell(36, 48, 48, 1.5).is_err());
    }

    #[test]
    fn no_bracket_is_reported() {
        // Q(0) < q* once B is large enough
        let err = critical_ell(10, 20, 100_000, 0.99).unwrap_err();
        assert!(matches!(err, PtlabError::NoBracket { .. }));
    }

    #[test]
    fn continuum_examples() {
        // z_B = 0 when ln(1/q*)/B = 1/2
        let q = (-1.5f64).exp();
        assert_relative_eq!(continuum_ell0(30, 40, 3, q).unwrap(), 20.0, epsilon = 1e-9);
        let l0 = continuum_ell0(144, 192, 192, default_q_star(192)).unwrap();
        assert!((l0 - 64.09).abs() < 0.05, "{l0}");
        assert!((z_b(192, default_q_star(192)).unwrap() + 2.82).abs() < 0.01);
        let offset = 0.5 - l0 / 192.0;
        let gamma = (2.0 * 192f64.ln() / 192.0).sqrt();
        let first = (2.0f64 * 0.25).sqrt() * gamma;
        assert!((offset / first - 1.0).abs() < 0.005, "{offset} vs {first}");
        assert!(continuum_ell0(3, 4, 1, 0.1).is_err());
    }

    #[test]
    fn uspensky_examples() {
        assert_eq!(normal_approx(50, 100), 0.5);
        assert_relative_eq!(uspensky_gap(10, 100).unwrap(), 0.0026454, max_relative = 1e-6);
        assert!(uspensky_gap(60, 100).is_err());
    }

    #[test]
    fn tail_decay_examples() {
        assert!(tail_decay_check(10, 40, 5).unwrap());
        let a = log_binom_tail(7, 30).unwrap();
        assert!(tail_decay_check(7, 30, 0).unwrap());
        assert!(a.is_finite());
    }

    #[test]
    fn log_tail_survives_underflow() {
        let l = log_binom_tail(1, 5000).unwrap();
        assert_relative_eq!(l, -4999.0 * std::f64::consts::LN_2, max_relative = 1e-14);
        assert_eq!(binom_tail(1, 5000).unwrap(), 0.0);
    }
}
