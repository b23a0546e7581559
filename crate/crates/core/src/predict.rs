//! Asymptotic phase-transition curves and finite-N offset predictions.
//!
//! For the half-line, the reals and the complex plane the asymptotic curve is
//! the statistical-dimension fixed point
//! `δ = min_τ [ε(g + τ²) + (1 − ε)·E dist²] / g`, where `g` is the real
//! dimension of a coefficient and the expectation is over the soft-threshold
//! residual of a standard Gaussian. For the unit box it is `(2δ − 1)₊`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::coeffsets::CoefficientSet;
use crate::error::{invalid, Result};

const BISECT_TOL: f64 = 1e-12;

/// Table constants `α_X` and `β_X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionConstants {
    pub alpha: f64,
    pub beta: f64,
    pub coeff_set: CoefficientSet,
}

impl PredictionConstants {
    pub fn for_set(coeff_set: CoefficientSet) -> Self {
        let (alpha, beta) = match coeff_set {
            CoefficientSet::Box01 => (1.0, 0.5),
            CoefficientSet::NonNeg => (1.0, -1.0 / 3.0),
            CoefficientSet::Real => (1.0, -0.5),
            CoefficientSet::Complex => (2.0 / 3.0, -1.0 / 3.0),
        };
        Self {
            alpha,
            beta,
            coeff_set,
        }
    }
}

fn phi(x: f64) -> f64 {
    Normal::standard().pdf(x)
}

fn upper(x: f64) -> f64 {
    // Φ(−x) without cancellation for large x
    Normal::standard().cdf(-x)
}

/// Expected squared distance of a free Gaussian coordinate to `τ·∂‖·‖`, and
/// the expected positive part that drives its τ-derivative.
fn residual_terms(set: CoefficientSet, tau: f64) -> (f64, f64) {
    match set {
        CoefficientSet::NonNeg => {
            let pos = phi(tau) - tau * upper(tau);
            ((1.0 + tau * tau) * upper(tau) - tau * phi(tau), pos)
        }
        CoefficientSet::Real => {
            let pos = 2.0 * (phi(tau) - tau * upper(tau));
            (2.0 * ((1.0 + tau * tau) * upper(tau) - tau * phi(tau)), pos)
        }
        CoefficientSet::Complex => {
            let root = (2.0 * PI).sqrt();
            let pos = root * upper(tau);
            (2.0 * (-tau * tau / 2.0).exp() - 2.0 * tau * root * upper(tau), pos)
        }
        CoefficientSet::Box01 => unreachable!("closed form"),
    }
}

/// `min_τ [ε(g + τ²) + (1 − ε)·T(τ)] / g`.
fn stat_dim(set: CoefficientSet, eps: f64) -> f64 {
    let g = set.ambient_dim() as f64;
    if eps <= 0.0 {
        return 0.0;
    }
    if eps >= 1.0 {
        return 1.0;
    }
    // stationarity: 2ετ − 2(1 − ε)·E(· − τ)₊ = 0, increasing in τ
    let slope = |tau: f64| eps * tau - (1.0 - eps) * residual_terms(set, tau).1;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while slope(hi) < 0.0 {
        hi *= 2.0;
    }
    while hi - lo > BISECT_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    (eps * (g + tau * tau) + (1.0 - eps) * residual_terms(set, tau).0) / g
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1], got {delta}")));
    }
    Ok(())
}

/// Asymptotic phase transition `ε*_asy(δ; X)`.
pub fn asymptotic_pt(delta: f64, set: CoefficientSet) -> Result<f64> {
    check_delta(delta)?;
    if set == CoefficientSet::Box01 {
        return Ok((2.0 * delta - 1.0).max(0.0));
    }
    if delta == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if stat_dim(set, mid) < delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `γ = √(2 ln B / M)`.
pub fn gamma_factor(big_m: u64, blocks: u64) -> Result<f64> {
    if big_m < 2 || blocks < 2 {
        return Err(invalid(format!("gamma needs M >= 2 and B >= 2, got M={big_m}, B={blocks}")));
    }
    Ok((2.0 * (blocks as f64).ln() / big_m as f64).sqrt())
}

/// First-order shape `η(δ; X)`.
pub fn eta_shape(delta: f64, set: CoefficientSet) -> Result<f64> {
    check_delta(delta)?;
    match set {
        CoefficientSet::Box01 => {
            if delta <= 0.5 {
                return Err(invalid(format!(
                    "the [0,1] shape needs delta > 1/2, got {delta}"
                )));
            }
            let e = 2.0 * delta - 1.0;
            Ok((1.0 - e).sqrt() / e)
        }
        CoefficientSet::NonNeg => {
            let e = asymptotic_pt(delta, set)?;
            Ok((1.0 - e).max(0.0).sqrt() / delta.sqrt())
        }
        CoefficientSet::Real | CoefficientSet::Complex => Ok(1.0 / delta.sqrt()),
    }
}

/// Second-order shape `ζ(δ; X)`: 1 for the unit box, `η` otherwise.
pub fn zeta_shape(delta: f64, set: CoefficientSet) -> Result<f64> {
    match set {
        CoefficientSet::Box01 => {
            eta_shape(delta, set)?;
            Ok(1.0)
        }
        _ => eta_shape(delta, set),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    First,
    Second,
}

impl Order {
    pub fn from_int(order: u8) -> Result<Order> {
        match order {
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            _ => Err(invalid(format!("order must be 1 or 2, got {order}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetPrediction {
    pub delta: f64,
    pub eps_asy: f64,
    pub gamma: f64,
    pub eta: f64,
    pub zeta: f64,
    pub eps_bd_first: f64,
    pub eps_bd_second: f64,
    /// Relative offset at the requested order.
    pub rel_offset: f64,
    pub order: Order,
    /// `B ≠ M`: the correction was only validated with as many blocks as
    /// columns per block.
    pub extrapolated: bool,
}

impl OffsetPrediction {
    pub fn eps_bd(&self) -> f64 {
        match self.order {
            Order::First => self.eps_bd_first,
            Order::Second => self.eps_bd_second,
        }
    }
}

/// Finite-N prediction `ε*_bd = ε*_asy·(1 − r)` with `r = αηγ (+ βζγ²)`.
pub fn predict_pt(
    m: u64,
    big_m: u64,
    blocks: u64,
    set: CoefficientSet,
    order: Order,
) -> Result<OffsetPrediction> {
    if m == 0 || m > big_m {
        return Err(invalid(format!("need 1 <= m <= M, got m={m}, M={big_m}")));
    }
    let delta = m as f64 / big_m as f64;
    let eps_asy = asymptotic_pt(delta, set)?;
    let gamma = gamma_factor(big_m, blocks)?;
    let eta = eta_shape(delta, set)?;
    let zeta = zeta_shape(delta, set)?;
    let c = PredictionConstants::for_set(set);
    let r1 = c.alpha * eta * gamma;
    let r2 = r1 + c.beta * zeta * gamma * gamma;
    Ok(OffsetPrediction {
        delta,
        eps_asy,
        gamma,
        eta,
        zeta,
        eps_bd_first: eps_asy * (1.0 - r1),
        eps_bd_second: eps_asy * (1.0 - r2),
        rel_offset: match order {
            Order::First => r1,
            Order::Second => r2,
        },
        order,
        extrapolated: blocks != big_m,
    })
}

fn is_perfect_power(n: u64, d: u32) -> bool {
    let r = (n as f64).powf(1.0 / d as f64).round() as u64;
    (r.saturating_sub(1)..=r + 1).any(|c| c.checked_pow(d) == Some(n))
}

/// Offset `√(4(d_e/d)(1 − δ) ln N / N^{d_r/d})` for `d` dimensions of which
/// `d_e` are sampled exhaustively and `d_r = d − d_e` partially.
pub fn general_d_offset(d: u32, d_e: u32, delta: f64, n: u64) -> Result<f64> {
    if d < 2 || d_e > d {
        return Err(invalid(format!("need d >= 2 and 0 <= d_e <= d, got d={d}, d_e={d_e}")));
    }
    check_delta(delta)?;
    if n < 2 || !is_perfect_power(n, d) {
        return Err(invalid(format!("N = {n} is not a perfect {d}-th power")));
    }
    let d_r = d - d_e;
    let n_f = n as f64;
    Ok((4.0 * (d_e as f64 / d as f64) * (1.0 - delta) * n_f.ln() / n_f.powf(d_r as f64 / d as f64))
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MriDims {
    Two,
    Three,
}

/// Relative offset for complex MRI undersampling, with `B = M` (2D) or
/// `B = M²` (3D) blocks.
pub fn mri_offset(dims: MriDims, delta: f64, big_m: u64) -> Result<f64> {
    check_delta(delta)?;
    if big_m < 2 {
        return Err(invalid("M must be at least 2"));
    }
    let m = big_m as f64;
    let l = m.ln();
    let c = 2.0 * 2f64.sqrt() / 3.0;
    let body = match dims {
        MriDims::Two => c * (l / m).sqrt() - (2.0 / 3.0) * (l / m),
        MriDims::Three => c * l.sqrt() / m - (2.0 / 3.0) * l / (m * m),
    };
    Ok(body / delta.sqrt())
}
