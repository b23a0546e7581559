//! Quantal-response fitting and the large-N block-failure test.
//!
//! Success counts per sparsity level are modelled as binomial with
//! `π(ε) = F(a + bε)`, where `F` is the standard normal CDF (probit) or
//! `1 − exp(−exp(η))` (complementary log-log). The fitted transition is the
//! root of the linear predictor, `ε* = −a/b`, which sits at `π = 1/2` for
//! probit and `π = 1 − 1/e` for cloglog.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{invalid, PtlabError, Result};
use crate::experiments::CellSummary;

const MAX_ITERS: usize = 100;
const PARAM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Probit,
    Cloglog,
}

impl Link {
    /// Success probability at the fitted transition.
    pub fn q_star(self) -> f64 {
        match self {
            Link::Probit => 0.5,
            Link::Cloglog => 1.0 - (-1.0f64).exp(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Link::Probit => "probit",
            Link::Cloglog => "cloglog",
        }
    }

    /// `(ln F, ln(1 − F), f, f')` at `η`.
    fn eval(self, eta: f64) -> (f64, f64, f64, f64) {
        match self {
            Link::Probit => {
                let n = Normal::standard();
                let pdf = n.pdf(eta);
                let log_f = n.cdf(eta).max(f64::MIN_POSITIVE).ln();
                let log_1mf = n.cdf(-eta).max(f64::MIN_POSITIVE).ln();
                (log_f, log_1mf, pdf, -eta * pdf)
            }
            Link::Cloglog => {
                let e = eta.exp();
                let log_f = (-(-e).exp_m1()).max(f64::MIN_POSITIVE).ln();
                let pdf = e * (-e).exp();
                (log_f, -e, pdf, pdf * (1.0 - e))
            }
        }
    }

    pub fn cdf(self, eta: f64) -> f64 {
        match self {
            Link::Probit => Normal::standard().cdf(eta),
            Link::Cloglog => -(-eta.exp()).exp_m1(),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Link {
    type Err = PtlabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "probit" => Ok(Link::Probit),
            "cloglog" | "cll" => Ok(Link::Cloglog),
            other => Err(invalid(format!("unknown link '{other}'"))),
        }
    }
}

/// One dose level: `successes` out of `trials` at sparsity `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseCell {
    pub eps: f64,
    pub trials: f64,
    pub successes: f64,
}

impl From<&CellSummary> for DoseCell {
    fn from(c: &CellSummary) -> Self {
        DoseCell {
            eps: c.epsilon(),
            trials: c.trials as f64,
            successes: c.successes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantalFit {
    pub link: Link,
    pub a: f64,
    pub b: f64,
    pub se_a: f64,
    pub se_b: f64,
    pub cov_ab: f64,
    pub eps_star: f64,
    /// Delta-method standard error of `eps_star`.
    pub se_eps_star: f64,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

fn log_likelihood(cells: &[DoseCell], link: Link, a: f64, b: f64) -> f64 {
    cells
        .iter()
        .map(|c| {
            let (lf, l1f, _, _) = link.eval(a + b * c.eps);
            let fail = c.trials - c.successes;
            let s = if c.successes > 0.0 { c.successes * lf } else { 0.0 };
            let f = if fail > 0.0 { fail * l1f } else { 0.0 };
            s + f
        })
        .sum()
}

/// Score vector and expected (Fisher) information.
fn score_and_fisher(cells: &[DoseCell], link: Link, a: f64, b: f64) -> ([f64; 2], [[f64; 3]; 1]) {
    let mut u = [0.0; 2];
    let mut info = [0.0; 3]; // (aa, ab, bb)
    for c in cells {
        let eta = a + b * c.eps;
        let (lf, l1f, f, _) = link.eval(eta);
        let p = lf.exp();
        let q = l1f.exp();
        let denom = (p * q).max(1e-300);
        let resid = (c.successes - c.trials * p) * f / denom;
        u[0] += resid;
        u[1] += resid * c.eps;
        let w = c.trials * f * f / denom;
        info[0] += w;
        info[1] += w * c.eps;
        info[2] += w * c.eps * c.eps;
    }
    (u, [info])
}

/// Observed information `−∂²ℓ`.
fn observed_info(cells: &[DoseCell], link: Link, a: f64, b: f64) -> [f64; 3] {
    let mut info = [0.0; 3];
    for c in cells {
        let eta = a + b * c.eps;
        let (lf, l1f, f, fp) = link.eval(eta);
        let p = lf.exp();
        let q = l1f.exp();
        let fail = c.trials - c.successes;
        let d2 = c.successes * (fp * p - f * f) / (p * p).max(1e-300)
            - fail * (fp * q + f * f) / (q * q).max(1e-300);
        info[0] -= d2;
        info[1] -= d2 * c.eps;
        info[2] -= d2 * c.eps * c.eps;
    }
    info
}

fn invert2(m: [f64; 3]) -> Option<[f64; 3]> {
    let det = m[0] * m[2] - m[1] * m[1];
    if det.is_nan() || det <= 0.0 || m[0] <= 0.0 {
        return None;
    }
    Some([m[2] / det, -m[1] / det, m[0] / det])
}

/// Maximum-likelihood fit of `π(ε) = F(a + bε)` by Fisher scoring with step
/// halving, so the log-likelihood never decreases between iterations.
pub fn fit_quantal(cells: &[DoseCell], link: Link) -> Result<QuantalFit> {
    fit_quantal_traced(cells, link).map(|(fit, _)| fit)
}

/// As [`fit_quantal`], also returning the log-likelihood after each iteration.
pub fn fit_quantal_traced(cells: &[DoseCell], link: Link) -> Result<(QuantalFit, Vec<f64>)> {
    for c in cells {
        if c.trials.is_nan() || c.trials <= 0.0 || c.successes < 0.0 || c.successes > c.trials || !c.eps.is_finite() {
            return Err(invalid(format!("invalid cell {c:?}")));
        }
    }
    let mut levels: Vec<f64> = cells.iter().map(|c| c.eps).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() < 3 {
        return Err(PtlabError::DegenerateDesign(format!(
            "need at least 3 distinct sparsity levels, got {}",
            levels.len()
        )));
    }
    if !cells
        .iter()
        .any(|c| c.successes > 0.0 && c.successes < c.trials)
    {
        return Err(PtlabError::Separation(
            "no cell has a success fraction strictly between 0 and 1".into(),
        ));
    }

    // start on the link scale through the pooled rate with a gentle slope
    let total_s: f64 = cells.iter().map(|c| c.successes).sum();
    let total_n: f64 = cells.iter().map(|c| c.trials).sum();
    let pbar = (total_s / total_n).clamp(0.05, 0.95);
    let mean_eps = cells.iter().map(|c| c.eps * c.trials).sum::<f64>() / total_n;
    let (mut a, mut b) = (
        match link {
            Link::Probit => Normal::standard().inverse_cdf(pbar),
            Link::Cloglog => (-(1.0 - pbar).ln()).ln(),
        },
        0.0,
    );
    a -= b * mean_eps;
    let mut ll = log_likelihood(cells, link, a, b);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=MAX_ITERS {
        iterations = it;
        let (u, [info]) = score_and_fisher(cells, link, a, b);
        let Some(inv) = invert2(info) else {
            break;
        };
        let da = inv[0] * u[0] + inv[1] * u[1];
        let db = inv[1] * u[0] + inv[2] * u[1];
        let mut step = 1.0;
        let (mut na, mut nb, mut nll);
        loop {
            na = a + step * da;
            nb = b + step * db;
            nll = log_likelihood(cells, link, na, nb);
            if nll >= ll || step < 1e-10 {
                break;
            }
            step *= 0.5;
        }
        if nll < ll {
            // no ascent possible along the scoring direction
            converged = da.abs().max(db.abs()) < 1e-6 * (1.0 + a.abs().max(b.abs()));
            break;
        }
        let change = (na - a).abs().max((nb - b).abs());
        a = na;
        b = nb;
        ll = nll;
        trace.push(ll);
        if change < PARAM_TOL * (1.0 + a.abs().max(b.abs())) {
            converged = true;
            break;
        }
    }
    let cov = invert2(observed_info(cells, link, a, b))
        .or_else(|| invert2(score_and_fisher(cells, link, a, b).1[0]))
        .unwrap_or([f64::NAN; 3]);
    let eps_star = -a / b;
    let ga = -1.0 / b;
    let gb = a / (b * b);
    let var_eps = ga * ga * cov[0] + 2.0 * ga * gb * cov[1] + gb * gb * cov[2];
    Ok((
        QuantalFit {
            link,
            a,
            b,
            se_a: cov[0].sqrt(),
            se_b: cov[2].sqrt(),
            cov_ab: cov[1],
            eps_star,
            se_eps_star: var_eps.sqrt(),
            converged,
            iterations,
            log_likelihood: ll,
        },
        trace,
    ))
}

/// Fits the cells of a success table, which must share `(m, M, B)`.
pub fn fit_table(rows: &[CellSummary], link: Link) -> Result<QuantalFit> {
    if let Some(first) = rows.first() {
        if rows
            .iter()
            .any(|r| (r.m, r.big_m, r.blocks) != (first.m, first.big_m, first.blocks))
        {
            return Err(invalid("rows mix different (m, M, B)"));
        }
    }
    let cells: Vec<DoseCell> = rows.iter().map(DoseCell::from).collect();
    fit_quantal(&cells, link)
}

/// The transition `−a/b` of a fit with negative slope.
pub fn empirical_pt(fit: &QuantalFit) -> Result<f64> {
    if fit.b.is_nan() || fit.b >= 0.0 {
        return Err(invalid(format!(
            "transition undefined for nonnegative slope b = {}",
            fit.b
        )));
    }
    Ok(-fit.a / fit.b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TestOutcome {
    RejectH0,
    AcceptH0,
    NoDecision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestDecision {
    pub y_bar: f64,
    pub mu: f64,
    pub z: f64,
    pub band: (f64, f64),
    pub outcome: TestOutcome,
}

/// Large-N test of whether a multiblock problem sits at the `q*` transition,
/// from the single-block failure fraction `Ȳ` over `S` trials.
///
/// Under the null the failure count is close to Poisson with mean `Sμ`,
/// `μ = ln(1/q*)/B`, so the band is `μ ± z_{1−α/2}√(μ/S)`.
pub fn hypothesis_test(y_bar: f64, trials: u64, blocks: u64, q_star: f64, alpha: f64) -> Result<TestDecision> {
    if trials == 0 || blocks == 0 {
        return Err(invalid("need S >= 1 and B >= 1"));
    }
    if !(q_star > 0.0 && q_star < 1.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("need q*, alpha in (0, 1); got {q_star}, {alpha}")));
    }
    let mu = (1.0 / q_star).ln() / blocks as f64;
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let half = z * (mu / trials as f64).sqrt();
    let band = (mu - half, mu + half);
    let outcome = if y_bar > band.1 {
        TestOutcome::RejectH0
    } else if y_bar < band.0 {
        TestOutcome::AcceptH0
    } else {
        TestOutcome::NoDecision
    };
    Ok(TestDecision {
        y_bar,
        mu,
        z,
        band,
        outcome,
    })
}
