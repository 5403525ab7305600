use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{DesignConfig, DesignState, UpDownConfig};
use crate::error::{Error, Result};
use crate::estimate::{fit_probit_mle_log, w_statistic};
use crate::model::ProbitTheta;
use crate::normal;
use crate::rng::{bernoulli, stream_rng, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogWStudy {
    pub theta0: ProbitTheta,
    pub x1: f64,
    pub d: f64,
    pub n: usize,
    #[serde(rename = "S")]
    pub replicates: usize,
    pub seed: u64,
    /// log W of the defined replicates, in replicate order.
    pub sample: Vec<f64>,
    pub undefined_count: usize,
    pub ks_distance: f64,
}

impl LogWStudy {
    pub fn undefined_fraction(&self) -> f64 {
        self.undefined_count as f64 / self.replicates as f64
    }
}

/// Kolmogorov–Smirnov distance between a sample of log W and log χ²₁.
pub fn ks_distance_log_chi2(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal::chi2_1_cdf(v.exp());
            (f - i as f64 / m).max((i + 1) as f64 / m - f)
        })
        .fold(0.0, f64::max)
}

/// Up-and-down runs from the probit model `theta0`; each replicate's MLE
/// gives W = (f₀ᵀθ̂)²/(f₀ᵀVf₀) with f₀ = (1, −α₀/β₀).
pub fn logw_study(theta0: ProbitTheta, x1: f64, d: f64, n: usize, s: usize, seed: u64) -> Result<LogWStudy> {
    if !theta0.is_valid() {
        return Err(Error::config("theta0", "beta must be positive and both components finite"));
    }
    if s == 0 || n == 0 {
        return Err(Error::config("S", "replicates and trials must be at least 1"));
    }
    let mut cfg = UpDownConfig::new(x1, d);
    cfg.n = Some(n);
    let design = DesignConfig::UpDown(cfg);
    design.validate()?;
    let f0 = [1.0, -theta0.alpha / theta0.beta];
    let ws: Vec<Option<f64>> = (0..s)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let mut st = DesignState::new(design.clone(), RngState::default()).ok()?;
            let (mut t, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
            while let Some(next) = &st.next {
                let lt = next.log_stimulus;
                let o = bernoulli(&mut rng, normal::cdf(theta0.eta(lt)));
                t.push(lt);
                y.push(o);
                st.record(o).ok()?;
            }
            let fit = fit_probit_mle_log(&t, &y).ok()?;
            w_statistic(&fit, f0).ok().map(f64::ln)
        })
        .collect();
    let sample: Vec<f64> = ws.iter().flatten().copied().collect();
    Ok(LogWStudy {
        theta0,
        x1,
        d,
        n,
        replicates: s,
        seed,
        undefined_count: s - sample.len(),
        ks_distance: ks_distance_log_chi2(&sample),
        sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal;

    #[test]
    fn ks_of_exact_draws_is_small() {
        let mut g = stream_rng(4, 0);
        let sample: Vec<f64> = (0..20_000)
            .map(|_| {
                let z = standard_normal(&mut g);
                (z * z).ln()
            })
            .collect();
        assert!(ks_distance_log_chi2(&sample) < 0.015);
        let shifted: Vec<f64> = sample.iter().map(|v| v + 1.0).collect();
        assert!(ks_distance_log_chi2(&shifted) > 0.2);
    }

    #[test]
    fn ks_single_point() {
        // median of χ²₁ is 0.454936…; one point there is 1/2 away at most
        let d = ks_distance_log_chi2(&[0.454_936_423_119_572_8_f64.ln()]);
        assert!((d - 0.5).abs() < 1e-9);
    }

    #[test]
    fn small_study_is_reproducible() {
        let a = logw_study(ProbitTheta::PETN_REFERENCE, 360.0, 0.2, 100, 200, 9).unwrap();
        let b = logw_study(ProbitTheta::PETN_REFERENCE, 360.0, 0.2, 100, 200, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sample.len() + a.undefined_count, 200);
    }
}
