//! Probit maximum likelihood on log stimulus, Fieller intervals and the
//! Wald-type W statistic.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::ProbitTheta;
use crate::normal;

use super::{check_level, IntervalShape, Method, QuantileEstimate};

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;

pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub theta_hat: ProbitTheta,
    /// Observed Fisher information Jₙ at θ̂.
    pub info: Mat2,
    /// Jₙ⁻¹ when Jₙ is invertible.
    pub cov: Option<Mat2>,
    pub converged: bool,
    pub iterations: usize,
    /// β̂ > 0.
    pub monotone: bool,
    pub log_likelihood: f64,
}

/// Level-aggregated data on the log scale: (log x, positives, trials).
type Levels = Vec<(f64, f64, f64)>;

fn levels_of(data: &Dataset) -> Levels {
    data.level_counts()
        .into_iter()
        .map(|l| (l.stimulus.ln(), l.positives as f64, l.trials as f64))
        .collect()
}

/// Aggregate (log x, y) pairs by level.
pub(crate) fn levels_from_log(t: &[f64], y: &[u8]) -> Levels {
    let mut pairs: Vec<(f64, u8)> = t.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Levels = Vec::new();
    for (t, y) in pairs {
        match out.last_mut() {
            Some(l) if l.0 == t => {
                l.1 += f64::from(y);
                l.2 += 1.0;
            }
            _ => out.push((t, f64::from(y), 1.0)),
        }
    }
    out
}

/// log Φ(u), accurate far into the lower tail.
fn log_cdf(u: f64) -> f64 {
    if u > -30.0 {
        normal::cdf(u).ln()
    } else {
        -0.5 * u * u - 0.5 * (2.0 * std::f64::consts::PI).ln() - normal::inv_mills(u).ln()
    }
}

fn ll_levels(levels: &Levels, th: &ProbitTheta) -> f64 {
    levels
        .iter()
        .map(|&(t, r, n)| {
            let eta = th.eta(t);
            let mut v = 0.0;
            if r > 0.0 {
                v += r * log_cdf(eta);
            }
            if n - r > 0.0 {
                v += (n - r) * log_cdf(-eta);
            }
            v
        })
        .sum()
}

/// (gradient, Hessian) of the log-likelihood.
fn derivatives(levels: &Levels, th: &ProbitTheta) -> ([f64; 2], Mat2) {
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for &(t, r, n) in levels {
        let eta = th.eta(t);
        let lp = normal::inv_mills(eta);
        let lm = normal::inv_mills(-eta);
        let s = r * lp - (n - r) * lm;
        let c = -r * lp * (eta + lp) - (n - r) * lm * (lm - eta);
        g[0] += s;
        g[1] += s * t;
        h[0][0] += c;
        h[0][1] += c * t;
        h[1][1] += c * t * t;
    }
    h[1][0] = h[0][1];
    (g, h)
}

fn info_levels(levels: &Levels, th: &ProbitTheta) -> Mat2 {
    let mut j = [[0.0; 2]; 2];
    for &(t, _, n) in levels {
        let eta = th.eta(t);
        // φ²/(Φ(1 − Φ)) = λ(η)·λ(−η)
        let w = n * normal::inv_mills(eta) * normal::inv_mills(-eta);
        j[0][0] += w;
        j[0][1] += w * t;
        j[1][1] += w * t * t;
    }
    j[1][0] = j[0][1];
    j
}

fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn inverse(m: &Mat2) -> Option<Mat2> {
    let d = det(m);
    let scale = m[0][0].abs().max(m[1][1].abs()).max(1e-300);
    if !(d.abs() > 1e-13 * scale * scale) || !d.is_finite() {
        return None;
    }
    Some([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]])
}

fn solve(m: &Mat2, v: &[f64; 2]) -> Option<[f64; 2]> {
    let inv = inverse(m)?;
    Some([
        inv[0][0] * v[0] + inv[0][1] * v[1],
        inv[1][0] * v[0] + inv[1][1] * v[1],
    ])
}

/// Log-likelihood of θ for a dataset.
pub fn log_likelihood(data: &Dataset, theta: &ProbitTheta) -> f64 {
    ll_levels(&levels_of(data), theta)
}

/// Analytic gradient of the log-likelihood.
pub fn score(data: &Dataset, theta: &ProbitTheta) -> [f64; 2] {
    derivatives(&levels_of(data), theta).0
}

/// Jₙ = Σ φ(θᵀzᵢ)² / {Φ(θᵀzᵢ)(1 − Φ(θᵀzᵢ))} zᵢzᵢᵀ with zᵢ = (1, log xᵢ)ᵀ.
pub fn fisher_information(data: &Dataset, theta: &ProbitTheta) -> Mat2 {
    info_levels(&levels_of(data), theta)
}

/// Check that a finite maximizer exists.
fn check_overlap(levels: &Levels) -> Result<()> {
    if levels.len() < 2 {
        return Err(Error::UndefinedMle("fewer than two distinct stimulus levels".into()));
    }
    let pos: f64 = levels.iter().map(|l| l.1).sum();
    let tot: f64 = levels.iter().map(|l| l.2).sum();
    if pos == 0.0 {
        return Err(Error::UndefinedMle("no positive outcomes".into()));
    }
    if pos == tot {
        return Err(Error::UndefinedMle("all outcomes positive".into()));
    }
    let max_neg = levels
        .iter()
        .filter(|l| l.2 > l.1)
        .map(|l| l.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_pos = levels
        .iter()
        .filter(|l| l.1 > 0.0)
        .map(|l| l.0)
        .fold(f64::INFINITY, f64::min);
    if max_neg <= min_pos {
        return Err(Error::UndefinedMle(
            "outcomes are separated by stimulus (no negative above a positive)".into(),
        ));
    }
    Ok(())
}

pub fn fit_probit_mle(data: &Dataset) -> Result<MleFit> {
    fit_levels(&levels_of(data))
}

/// MLE from log stimuli and outcomes.
pub fn fit_probit_mle_log(t: &[f64], y: &[u8]) -> Result<MleFit> {
    fit_levels(&levels_from_log(t, y))
}

fn fit_levels(levels: &Levels) -> Result<MleFit> {
    check_overlap(levels)?;
    let pos: f64 = levels.iter().map(|l| l.1).sum();
    let tot: f64 = levels.iter().map(|l| l.2).sum();
    let mut th = ProbitTheta::new(normal::quantile(pos / tot), 0.0);
    let mut ll = ll_levels(levels, &th);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..=MAX_ITER {
        let (g, h) = derivatives(levels, &th);
        if g[0].abs().max(g[1].abs()) < GRAD_TOL {
            converged = true;
            iterations = it;
            break;
        }
        if it == MAX_ITER {
            iterations = it;
            break;
        }
        let neg_h = [[-h[0][0], -h[0][1]], [-h[1][0], -h[1][1]]];
        let dir = if neg_h[0][0] > 0.0 && det(&neg_h) > 0.0 {
            solve(&neg_h, &g)
        } else {
            None
        }
        .or_else(|| solve(&info_levels(levels, &th), &g));
        let Some(dir) = dir else {
            return Err(Error::Singular("information matrix is singular during fitting".into()));
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = ProbitTheta::new(th.alpha + step * dir[0], th.beta + step * dir[1]);
            let cll = ll_levels(levels, &cand);
            if cll.is_finite() && cll >= ll - 1e-12 * ll.abs().max(1.0) {
                th = cand;
                ll = cll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || !th.alpha.is_finite() || th.beta.abs() > 1e8 {
            return Err(Error::UndefinedMle("Newton iteration diverged".into()));
        }
    }
    if !converged {
        return Err(Error::UndefinedMle(format!(
            "no convergence within {MAX_ITER} iterations"
        )));
    }
    let info = info_levels(levels, &th);
    Ok(MleFit {
        theta_hat: th,
        cov: inverse(&info),
        info,
        converged,
        iterations,
        monotone: th.beta > 0.0,
        log_likelihood: ll,
    })
}

/// W = (f₀ᵀθ̂)² / (f₀ᵀ V f₀).
pub fn w_statistic(fit: &MleFit, f0: [f64; 2]) -> Result<f64> {
    let v = fit
        .cov
        .ok_or_else(|| Error::Singular("information matrix is not invertible".into()))?;
    let num = f0[0] * fit.theta_hat.alpha + f0[1] * fit.theta_hat.beta;
    let den = f0[0] * f0[0] * v[0][0] + 2.0 * f0[0] * f0[1] * v[0][1] + f0[1] * f0[1] * v[1][1];
    if !(den > 0.0) {
        return Err(Error::Singular(format!("f0ᵀVf0 = {den} is not positive")));
    }
    Ok(num * num / den)
}

/// Fieller confidence set for m = log ξ₁₀₀ₚ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogInterval {
    pub point: f64,
    pub low: f64,
    pub high: f64,
    pub shape: IntervalShape,
}

/// Solves (α̂ + β̂m − c)² ≤ q(v₁₁ + 2m v₁₂ + m² v₂₂) with c = Φ⁻¹(p) and
/// q the χ²₁ quantile at `level`.
pub fn fieller_log_interval(fit: &MleFit, p: f64, level: f64) -> Result<LogInterval> {
    crate::model::check_probability(p)?;
    check_level(level)?;
    let (a, b) = (fit.theta_hat.alpha, fit.theta_hat.beta);
    if !(b > 0.0) {
        return Err(Error::NonIdentifiable(format!(
            "slope estimate {b} is not positive"
        )));
    }
    let v = fit
        .cov
        .ok_or_else(|| Error::Singular("information matrix is not invertible".into()))?;
    let c = normal::quantile(p);
    let z = normal::two_sided_z(level);
    let q = z * z;
    let point = (c - a) / b;
    let qa = b * b - q * v[1][1];
    let qb = (a - c) * b - q * v[0][1];
    let qc = (a - c) * (a - c) - q * v[0][0];
    let disc = qb * qb - qa * qc;
    let (ninf, pinf) = (f64::NEG_INFINITY, f64::INFINITY);
    let out = if qa > 0.0 {
        let r = disc.max(0.0).sqrt();
        LogInterval {
            point,
            low: (-qb - r) / qa,
            high: (-qb + r) / qa,
            shape: IntervalShape::Bounded,
        }
    } else if qa < 0.0 && disc >= 0.0 {
        let r = disc.sqrt();
        let (r1, r2) = ((-qb + r) / qa, (-qb - r) / qa);
        LogInterval {
            point,
            low: ninf,
            high: pinf,
            shape: IntervalShape::Complement {
                gap_low: r1.min(r2),
                gap_high: r1.max(r2),
            },
        }
    } else if qa < 0.0 {
        LogInterval {
            point,
            low: ninf,
            high: pinf,
            shape: IntervalShape::WholeLine,
        }
    } else if qb > 0.0 {
        LogInterval {
            point,
            low: ninf,
            high: -qc / (2.0 * qb),
            shape: IntervalShape::HalfLine,
        }
    } else if qb < 0.0 {
        LogInterval {
            point,
            low: -qc / (2.0 * qb),
            high: pinf,
            shape: IntervalShape::HalfLine,
        }
    } else {
        LogInterval {
            point,
            low: ninf,
            high: pinf,
            shape: IntervalShape::WholeLine,
        }
    };
    Ok(out)
}

pub fn fieller_ci(fit: &MleFit, p: f64, level: f64) -> Result<QuantileEstimate> {
    let li = fieller_log_interval(fit, p, level)?;
    Ok(QuantileEstimate::from_log(
        p,
        level,
        Method::FiellerMle,
        li.point,
        li.low,
        li.high,
        li.shape,
    ))
}
