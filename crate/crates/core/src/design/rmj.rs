//! Robbins–Monro–Joseph gain and offset schedule.
//!
//! With c = Φ⁻¹(p), γ = β̃/φ(c) for the derivative proxy β̃, and the
//! current prior variance τᵢ² of the target log-quantile:
//!
//! ```text
//! sᵢ   = √(1 + γ²τᵢ²)
//! bᵢ   = Φ(c/sᵢ)
//! aᵢ   = γ τᵢ² φ(c/sᵢ) / (sᵢ bᵢ(1 − bᵢ))
//! τᵢ₊₁² = τᵢ² − aᵢ² bᵢ(1 − bᵢ)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::check_probability;
use crate::normal;

/// Derivative proxy used when none is supplied: φ(Φ⁻¹(p)).
pub fn default_beta_approx(p: f64) -> f64 {
    normal::pdf(normal::quantile(p))
}

/// One step of the recursion: returns (aᵢ, bᵢ, τᵢ₊₁²).
pub fn rmj_step(c: f64, gamma: f64, tau2: f64) -> (f64, f64, f64) {
    let s = (1.0 + gamma * gamma * tau2).sqrt();
    let u = c / s;
    let b = normal::cdf(u);
    let bv = b * normal::sf(u);
    let a = gamma * tau2 * normal::pdf(u) / (s * bv);
    let next = (tau2 - a * a * bv).max(0.0);
    (a, b, next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmjSchedule {
    pub p: f64,
    pub tau1: f64,
    pub beta_approx: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// τᵢ² for i = 1..=n+1.
    pub tau2: Vec<f64>,
}

impl RmjSchedule {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Posterior standard deviation after `i` trials.
    pub fn tau_after(&self, i: usize) -> f64 {
        self.tau2[i].sqrt()
    }
}

pub(crate) fn check_rmj_params(p: f64, tau1: f64, beta_approx: f64) -> Result<()> {
    check_probability(p)?;
    if !(tau1 > 0.0 && tau1.is_finite()) {
        return Err(Error::Domain(format!("tau1 must be positive, got {tau1}")));
    }
    if !(beta_approx > 0.0 && beta_approx.is_finite()) {
        return Err(Error::Domain(format!("beta_approx must be positive, got {beta_approx}")));
    }
    Ok(())
}

pub fn rmj_build_schedule(p: f64, tau1: f64, beta_approx: f64, n: usize) -> Result<RmjSchedule> {
    check_rmj_params(p, tau1, beta_approx)?;
    if n < 1 {
        return Err(Error::Domain("schedule length must be at least 1".into()));
    }
    let c = normal::quantile(p);
    let gamma = beta_approx / normal::pdf(c);
    let mut tau2 = Vec::with_capacity(n + 1);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut t2 = tau1 * tau1;
    tau2.push(t2);
    for _ in 0..n {
        let (ai, bi, next) = rmj_step(c, gamma, t2);
        a.push(ai);
        b.push(bi);
        t2 = next;
        tau2.push(t2);
    }
    Ok(RmjSchedule {
        p,
        tau1,
        beta_approx,
        a,
        b,
        tau2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contract_holds() {
        for p in [0.1, 0.25, 0.5, 0.75, 0.9] {
            for tau1 in [0.3, 1.0, 3.0] {
                let s = rmj_build_schedule(p, tau1, default_beta_approx(p), 200).unwrap();
                assert!(s.a.iter().all(|&a| a > 0.0));
                assert!(s.b.iter().all(|&b| b > 0.0 && b < 1.0));
                assert!(s.tau2.windows(2).all(|w| w[1] < w[0]));
            }
        }
        assert!(rmj_build_schedule(0.5, 1.0, 0.4, 0).is_err());
        assert!(rmj_build_schedule(1.0, 1.0, 0.4, 5).is_err());
        assert!(rmj_build_schedule(0.5, -1.0, 0.4, 5).is_err());
    }

    #[test]
    fn offsets_approach_target() {
        let s = rmj_build_schedule(0.5, 1.0, default_beta_approx(0.5), 50).unwrap();
        assert!(s.b.iter().all(|&b| (b - 0.5).abs() < 1e-15));
        // for p < 1/2 the offsets fall monotonically toward p from above
        let s = rmj_build_schedule(0.1, 1.0, default_beta_approx(0.1), 2000).unwrap();
        assert!(s.b.windows(2).all(|w| w[1] < w[0] && w[1] > 0.1));
        assert!((s.b[1999] - 0.1).abs() < 1e-3);
        assert!(s.b[0] > 0.1 && s.b[0] < 0.5);
        let s = rmj_build_schedule(0.9, 1.0, default_beta_approx(0.9), 2000).unwrap();
        assert!(s.b.windows(2).all(|w| w[1] > w[0] && w[1] < 0.9));
    }

    #[test]
    fn first_step_by_hand() {
        // p = 0.5, τ₁ = 1, γ = 1: s = √2, b = 1/2,
        // a = φ(0)/(√2·¼), τ₂² = 1 − a²/4
        let s = rmj_build_schedule(0.5, 1.0, default_beta_approx(0.5), 1).unwrap();
        let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let a = phi0 / (2f64.sqrt() * 0.25);
        assert!((s.a[0] - a).abs() < 1e-15);
        assert!((s.tau2[1] - (1.0 - a * a / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn gains_sum_diverges_squares_converge() {
        let p = 0.25;
        let c = normal::quantile(p);
        let (mut sa, mut sa2, mut t2) = (0.0, 0.0, 1.0);
        let mut checkpoints = Vec::new();
        for i in 1..=1_000_000usize {
            let (a, _, next) = rmj_step(c, 1.0, t2);
            sa += a;
            sa2 += a * a;
            t2 = next;
            if i.is_power_of_two() || i == 1_000_000 {
                checkpoints.push((i, sa, sa2));
            }
        }
        // Σa grows by a roughly constant amount per doubling (log growth)
        let (_, s_lo, q_lo) = checkpoints[checkpoints.len() - 3];
        let (_, s_mid, q_mid) = checkpoints[checkpoints.len() - 2];
        assert!(s_mid - s_lo > 0.5, "Σa stalled: {s_lo} → {s_mid}");
        assert!(sa > 10.0);
        // Σa² increments vanish
        assert!(q_mid - q_lo < 1e-4);
        assert!(sa2 - q_mid < 1e-4);
    }
}
