//! Quantile estimation: probit MLE with Fieller intervals, centred
//! isotonic regression, and the RMJ terminal estimate.

mod isotonic;
mod mle;

pub use isotonic::{
    cir, cir_quantile, cir_shrunk, invert_fit, pava, IsoNode, IsotonicFit, XScale,
};
pub use mle::{
    fieller_ci, fieller_log_interval, fit_probit_mle, fit_probit_mle_log, fisher_information, log_likelihood,
    score, w_statistic, LogInterval, MleFit,
};

use serde::{Deserialize, Serialize};

use crate::design::{DesignKind, DesignState};
use crate::error::{Error, Result};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FiellerMle,
    CirDelta,
    Rmj,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::FiellerMle => "fieller-mle",
            Method::CirDelta => "cir-delta",
            Method::Rmj => "rmj",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fieller-mle" | "fieller" | "mle" => Ok(Method::FiellerMle),
            "cir-delta" | "cir" => Ok(Method::CirDelta),
            "rmj" => Ok(Method::Rmj),
            other => Err(Error::config("method", format!("unknown method `{other}`"))),
        }
    }
}

/// Serde for floats that may be infinite: ±∞ become `"-inf"` / `"+inf"`.
pub mod inf_float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("+inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "+inf" | "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("expected a number or ±inf, got `{other}`"))),
            },
        }
    }
}

/// Shape of a confidence set on the log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IntervalShape {
    Bounded,
    /// Unbounded on at least one side.
    HalfLine,
    /// Everything except the open gap between two rays.
    Complement {
        #[serde(with = "inf_float")]
        gap_low: f64,
        #[serde(with = "inf_float")]
        gap_high: f64,
    },
    WholeLine,
}

/// Estimate of ξ₁₀₀ₚ with a two-sided interval.
///
/// Log-scale fields are on the design axis; stimulus-scale fields are
/// their exponentials (a log bound of −∞ is a stimulus bound of 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub p: f64,
    pub point: f64,
    #[serde(with = "inf_float")]
    pub ci_low: f64,
    #[serde(with = "inf_float")]
    pub ci_high: f64,
    pub log_point: f64,
    #[serde(with = "inf_float")]
    pub log_ci_low: f64,
    #[serde(with = "inf_float")]
    pub log_ci_high: f64,
    pub level: f64,
    pub method: Method,
    pub shape: IntervalShape,
}

impl QuantileEstimate {
    pub fn from_log(p: f64, level: f64, method: Method, m: f64, lo: f64, hi: f64, shape: IntervalShape) -> Self {
        Self {
            p,
            point: m.exp(),
            ci_low: lo.exp(),
            ci_high: hi.exp(),
            log_point: m,
            log_ci_low: lo,
            log_ci_high: hi,
            level,
            method,
            shape,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.shape == IntervalShape::Bounded
    }

    /// Whether the confidence set contains `log_value` (design axis).
    pub fn covers_log(&self, log_value: f64) -> bool {
        match self.shape {
            IntervalShape::Complement { gap_low, gap_high } => !(log_value > gap_low && log_value < gap_high),
            IntervalShape::WholeLine => true,
            _ => self.log_ci_low <= log_value && log_value <= self.log_ci_high,
        }
    }

    /// Width on the log scale (∞ when unbounded).
    pub fn log_width(&self) -> f64 {
        match self.shape {
            IntervalShape::Bounded => self.log_ci_high - self.log_ci_low,
            _ => f64::INFINITY,
        }
    }

    /// Width in stimulus units (∞ when unbounded).
    pub fn width(&self) -> f64 {
        match self.shape {
            IntervalShape::Bounded => self.ci_high - self.ci_low,
            _ => f64::INFINITY,
        }
    }
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("confidence level must lie in (0, 1), got {level}")))
    }
}

/// RMJ interval from the current log level and prior variance.
pub fn rmj_interval(p: f64, t: f64, tau2: f64, level: f64) -> Result<QuantileEstimate> {
    check_level(level)?;
    let h = normal::two_sided_z(level) * tau2.sqrt();
    Ok(QuantileEstimate::from_log(p, level, Method::Rmj, t, t - h, t + h, IntervalShape::Bounded))
}

/// Terminal RMJ estimate: x_{n+1} with a symmetric log-scale interval.
pub fn rmj_estimate(state: &DesignState, level: f64) -> Result<QuantileEstimate> {
    let p = match (&state.config, state.kind()) {
        (crate::design::DesignConfig::Rmj(c), DesignKind::Rmj) => c.p,
        _ => return Err(Error::State("not an RMJ design".into())),
    };
    if !state.is_terminated() {
        return Err(Error::State(format!(
            "RMJ run incomplete: {} trials recorded",
            state.history.len()
        )));
    }
    rmj_provisional(state, p, level)
}

/// RMJ estimate after however many trials have been recorded.
pub fn rmj_provisional(state: &DesignState, p: f64, level: f64) -> Result<QuantileEstimate> {
    let t = state
        .current_log_level()
        .ok_or_else(|| Error::State("no current level".into()))?;
    let tau2 = state
        .rmj_tau2()
        .ok_or_else(|| Error::State("not an RMJ design".into()))?;
    rmj_interval(p, t, tau2, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{DesignConfig, RmjConfig};
    use crate::rng::RngState;

    #[test]
    fn infinite_markers_roundtrip() {
        let q = QuantileEstimate::from_log(
            0.5,
            0.9,
            Method::FiellerMle,
            1.0,
            f64::NEG_INFINITY,
            f64::INFINITY,
            IntervalShape::WholeLine,
        );
        let s = serde_json::to_string(&q).unwrap();
        assert!(s.contains("\"-inf\"") && s.contains("\"+inf\""));
        let back: QuantileEstimate = serde_json::from_str(&s).unwrap();
        assert_eq!(back, q);
        assert_eq!(back.ci_low, 0.0);
    }

    #[test]
    fn rmj_prior_only() {
        let mut c = RmjConfig::new(50.0, 0.5, 1);
        c.tau1 = 0.7;
        let s = DesignState::new(DesignConfig::Rmj(c), RngState::default()).unwrap();
        assert!(rmj_estimate(&s, 0.9).is_err());
        let q = rmj_provisional(&s, 0.5, 0.9).unwrap();
        assert!((q.point - 50.0).abs() < 1e-12);
        let z = normal::two_sided_z(0.9);
        assert!((q.log_width() - 2.0 * z * 0.7).abs() < 1e-12);
    }

    #[test]
    fn rmj_terminal() {
        let c = RmjConfig::new(50.0, 0.5, 3);
        let mut s = DesignState::new(DesignConfig::Rmj(c.clone()), RngState::default()).unwrap();
        for y in [1, 0, 1] {
            s.record(y).unwrap();
        }
        let q = rmj_estimate(&s, 0.9).unwrap();
        let sched = c.schedule().unwrap();
        assert!((q.point - s.current_log_level().unwrap().exp()).abs() < 1e-12);
        let z = normal::two_sided_z(0.9);
        assert!((q.log_width() - 2.0 * z * sched.tau_after(3)).abs() < 1e-12);
        assert!(q.log_ci_low < q.log_point && q.log_point < q.log_ci_high);
    }
}
