//! Ground-truth response models.
//!
//! Every model is expressed on a *design axis* `t`. For the probit-on-log
//! family the design axis is `log x`; the location–scale families used in
//! simulation studies live directly on the design axis, and the
//! corresponding stimulus is `exp(t)`. All sequential designs step on the
//! design axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Probit coefficients θ = (α, β) for P(y = 1 | x) = Φ(α + β log x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbitTheta {
    pub alpha: f64,
    pub beta: f64,
}

impl ProbitTheta {
    /// Ground truth used throughout the friction studies.
    pub const PETN_REFERENCE: ProbitTheta = ProbitTheta {
        alpha: -9.1258,
        beta: 2.0473,
    };

    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    pub fn is_valid(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite() && self.beta > 0.0
    }

    /// Linear predictor α + β·t at log-stimulus `t`.
    pub fn eta(&self, log_x: f64) -> f64 {
        self.alpha + self.beta * log_x
    }

    /// Log of the stimulus with explosion probability `p`.
    pub fn log_quantile(&self, p: f64) -> f64 {
        (normal::quantile(p) - self.alpha) / self.beta
    }

    pub fn to_model(&self) -> ResponseModel {
        ResponseModel::probit_log(*self)
    }
}

/// Φ(α + β·log x).
pub fn probit_prob(theta: &ProbitTheta, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("stimulus must be positive, got {x}")));
    }
    Ok(normal::cdf(theta.eta(x.ln())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    ProbitLog,
    Normal,
    Uniform,
    Logistic,
    ExtremeValue,
    SkewedLogistic,
    Cauchy,
}

impl Family {
    /// The six families of the simulation comparison.
    pub const STUDY_FAMILIES: [Family; 6] = [
        Family::Normal,
        Family::Uniform,
        Family::Logistic,
        Family::ExtremeValue,
        Family::SkewedLogistic,
        Family::Cauchy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::ProbitLog => "probit-log",
            Family::Normal => "normal",
            Family::Uniform => "uniform",
            Family::Logistic => "logistic",
            Family::ExtremeValue => "extreme-value",
            Family::SkewedLogistic => "skewed-logistic",
            Family::Cauchy => "cauchy",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "probit-log" => Family::ProbitLog,
            "normal" => Family::Normal,
            "uniform" => Family::Uniform,
            "logistic" => Family::Logistic,
            "extreme-value" => Family::ExtremeValue,
            "skewed-logistic" => Family::SkewedLogistic,
            "cauchy" => Family::Cauchy,
            other => return Err(Error::config("family", format!("unknown family `{other}`"))),
        })
    }
}

fn default_shape() -> f64 {
    1.0
}

/// A location–scale sensitivity distribution on the design axis.
///
/// * normal: Φ(z)
/// * uniform: z clamped to [0, 1]
/// * logistic: 1/(1 + e^{-z})
/// * extreme-value: 1 − exp(−e^{z})
/// * skewed-logistic: (1 + e^{-z})^{-shape}
/// * cauchy: 1/2 + atan(z)/π
///
/// with z = (t − location)/scale. `probit-log` is the normal family on
/// t = log x, i.e. location = −α/β and scale = 1/β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseModel {
    pub family: Family,
    #[serde(default)]
    pub location: f64,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_shape")]
    pub shape: f64,
}

fn default_scale() -> f64 {
    1.0
}

impl ResponseModel {
    pub fn new(family: Family, location: f64, scale: f64) -> Self {
        Self {
            family,
            location,
            scale,
            shape: 1.0,
        }
    }

    pub fn standard(family: Family) -> Self {
        Self::new(family, 0.0, 1.0)
    }

    pub fn skewed_logistic(location: f64, scale: f64, shape: f64) -> Self {
        Self {
            family: Family::SkewedLogistic,
            location,
            scale,
            shape,
        }
    }

    pub fn probit_log(theta: ProbitTheta) -> Self {
        Self::new(Family::ProbitLog, -theta.alpha / theta.beta, 1.0 / theta.beta)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !self.location.is_finite() {
            errs.push(crate::error::FieldError::new("location", "must be finite"));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            errs.push(crate::error::FieldError::new("scale", "must be positive"));
        }
        if self.family == Family::SkewedLogistic && !(self.shape > 0.0) {
            errs.push(crate::error::FieldError::new("shape", "must be positive"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn standard_cdf(&self, z: f64) -> f64 {
        let v = match self.family {
            Family::ProbitLog | Family::Normal => normal::cdf(z),
            Family::Uniform => z.clamp(0.0, 1.0),
            Family::Logistic => logistic(z),
            Family::ExtremeValue => -(-z.exp()).exp_m1(),
            Family::SkewedLogistic => {
                // (1 + e^{-z})^{-s} = exp(-s·log1p(e^{-z}))
                let l = if z > -700.0 {
                    (-z).exp().ln_1p()
                } else {
                    -z
                };
                (-self.shape * l).exp()
            }
            Family::Cauchy => 0.5 + z.atan() / std::f64::consts::PI,
        };
        v.clamp(0.0, 1.0)
    }

    fn standard_quantile(&self, p: f64) -> f64 {
        match self.family {
            Family::ProbitLog | Family::Normal => normal::quantile(p),
            Family::Uniform => p,
            Family::Logistic => (p / (1.0 - p)).ln(),
            Family::ExtremeValue => (-(-p).ln_1p()).ln(),
            Family::SkewedLogistic => {
                // e^{-z} = p^{-1/s} - 1
                let r = ((-p.ln()) / self.shape).exp_m1();
                -r.ln()
            }
            Family::Cauchy => (std::f64::consts::PI * (p - 0.5)).tan(),
        }
    }

    /// F on the design axis.
    pub fn cdf_design(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        self.standard_cdf((t - self.location) / self.scale)
    }

    /// F⁻¹ on the design axis.
    pub fn quantile_design(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        let t = self.location + self.scale * self.standard_quantile(p);
        if t.is_finite() {
            Ok(t)
        } else {
            self.bisect_quantile(p, 1e-13)
        }
    }

    /// F on the model's native axis: stimulus `x > 0` for probit-log, the
    /// design axis otherwise.
    pub fn cdf(&self, x: f64) -> f64 {
        match self.family {
            Family::ProbitLog => {
                if x <= 0.0 {
                    0.0
                } else {
                    self.cdf_design(x.ln())
                }
            }
            _ => self.cdf_design(x),
        }
    }

    /// F⁻¹ on the native axis.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        let t = self.quantile_design(p)?;
        Ok(match self.family {
            Family::ProbitLog => t.exp(),
            _ => t,
        })
    }

    /// Bisection on the design axis; used as a fallback and as a test oracle.
    pub fn bisect_quantile(&self, p: f64, tol: f64) -> Result<f64> {
        check_probability(p)?;
        let mut lo = self.location - self.scale;
        let mut hi = self.location + self.scale;
        let mut width = self.scale;
        while self.cdf_design(lo) > p {
            width *= 2.0;
            lo = self.location - width;
            if width > 1e300 {
                return Err(Error::Domain("quantile bracket diverged".into()));
            }
        }
        width = self.scale;
        while self.cdf_design(hi) < p {
            width *= 2.0;
            hi = self.location + width;
            if width > 1e300 {
                return Err(Error::Domain("quantile bracket diverged".into()));
            }
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= tol * (1.0 + mid.abs()) {
                break;
            }
            if self.cdf_design(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Density-free derivative of F at the p-quantile, by central differences.
    pub fn slope_at_quantile(&self, p: f64) -> Result<f64> {
        let t = self.quantile_design(p)?;
        let h = 1e-5 * self.scale;
        Ok((self.cdf_design(t + h) - self.cdf_design(t - h)) / (2.0 * h))
    }

    pub fn label(&self) -> String {
        self.family.name().to_string()
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability must lie in (0, 1), got {p}")))
    }
}

/// ξ₁₀₀ₚ of a model, in the model's native units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub p: f64,
    pub value: f64,
}

impl Quantile {
    pub fn of(model: &ResponseModel, p: f64) -> Result<Self> {
        Ok(Self {
            p,
            value: model.quantile(p)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const THETA0: ProbitTheta = ProbitTheta::PETN_REFERENCE;

    #[test]
    fn probit_prob_examples() {
        assert_eq!(probit_prob(&ProbitTheta::new(0.0, 1.0), 1.0).unwrap(), 0.5);
        // median exp(9.1258/2.0473) evaluated independently
        let median = (9.1258f64 / 2.0473).exp();
        assert!((median - 86.3).abs() < 0.1);
        assert!((probit_prob(&THETA0, median).unwrap() - 0.5).abs() < 1e-12);
        // 30-digit reference: 0.998276726747891362741917809566
        let v = probit_prob(&THETA0, 360.0).unwrap();
        assert!((v - 0.998_276_726_747_891_4).abs() < 1e-14, "{v}");
        assert!(probit_prob(&THETA0, 0.0).is_err());
        assert!(probit_prob(&THETA0, -3.0).is_err());
    }

    #[test]
    fn model_cdf_examples() {
        assert_eq!(ResponseModel::standard(Family::Normal).cdf(0.0), 0.5);
        assert!((ResponseModel::standard(Family::Uniform).cdf(0.25) - 0.25).abs() < 1e-15);
        let c = ResponseModel::standard(Family::Cauchy);
        assert!((c.cdf(1.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn cauchy_cdf_matches_density_quadrature() {
        // ∫_{-∞}^{1} 1/(π(1+u²)) du = 1/2 + ∫_0^1 ...
        let n = 10_000;
        let h = 1.0 / n as f64;
        let dens = |u: f64| 1.0 / (std::f64::consts::PI * (1.0 + u * u));
        let mut s = dens(0.0) + dens(1.0);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * dens(i as f64 * h);
        }
        let q = 0.5 + s * h / 3.0;
        let c = ResponseModel::standard(Family::Cauchy);
        assert!((c.cdf(1.0) - q).abs() < 1e-12);
    }

    #[test]
    fn quantile_examples() {
        let m = THETA0.to_model();
        let med = m.quantile(0.5).unwrap();
        assert!((med - (9.1258f64 / 2.0473).exp()).abs() < 1e-9);
        assert_eq!(ResponseModel::standard(Family::Logistic).quantile(0.5).unwrap(), 0.0);
        let ev = ResponseModel::standard(Family::ExtremeValue);
        let oracle = ev.bisect_quantile(0.9, 1e-14).unwrap();
        let q = ev.quantile(0.9).unwrap();
        assert!((q - oracle).abs() < 1e-12);
        assert!((ev.cdf(q) - 0.9).abs() < 1e-12);
        assert!(m.quantile(0.0).is_err());
        assert!(m.quantile(1.0).is_err());
    }

    #[test]
    fn extreme_arguments_saturate() {
        for fam in Family::STUDY_FAMILIES {
            let m = ResponseModel::standard(fam);
            for t in [-700.0, -300.0, 300.0, 700.0] {
                let v = m.cdf_design(t);
                assert!((0.0..=1.0).contains(&v), "{fam:?} {t} {v}");
            }
            assert!(m.cdf_design(-700.0) < 1e-2);
            assert!(m.cdf_design(700.0) > 1.0 - 1e-2);
        }
        let m = THETA0.to_model();
        assert_eq!(m.cdf((-700.0f64).exp()), 0.0);
        assert_eq!(m.cdf(700.0f64.exp()), 1.0);
    }

    fn any_model() -> impl Strategy<Value = ResponseModel> {
        (0usize..7, -5.0f64..5.0, 0.1f64..5.0, 0.2f64..5.0).prop_map(|(f, loc, sc, sh)| {
            let family = [
                Family::ProbitLog,
                Family::Normal,
                Family::Uniform,
                Family::Logistic,
                Family::ExtremeValue,
                Family::SkewedLogistic,
                Family::Cauchy,
            ][f];
            ResponseModel {
                family,
                location: loc,
                scale: sc,
                shape: sh,
            }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn cdf_of_quantile_is_identity(m in any_model(), p in 0.001f64..0.999) {
            let t = m.quantile_design(p).unwrap();
            prop_assert!((m.cdf_design(t) - p).abs() < 1e-8);
        }

        #[test]
        fn probit_prob_strictly_increasing(alpha in -20.0f64..20.0, beta in 0.1f64..5.0,
                                           mut xs in proptest::collection::vec(0.5f64..5.0, 2..20)) {
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup();
            let th = ProbitTheta::new(alpha, beta);
            // stay inside the range where Φ is not saturated in f64
            let ps: Vec<f64> = xs.iter().map(|&x| probit_prob(&th, x).unwrap()).collect();
            for w in ps.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            for (w, xw) in ps.windows(2).zip(xs.windows(2)) {
                let eta_hi = th.eta(xw[1].ln());
                if eta_hi.abs() < 4.0 && xw[1] / xw[0] > 1.0 + 1e-6 {
                    prop_assert!(w[0] < w[1]);
                }
            }
        }
    }
}
