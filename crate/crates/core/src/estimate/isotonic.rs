//! Isotonic regression for binary dose–response data.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::normal;

use super::{check_level, IntervalShape, Method, QuantileEstimate};

/// Axis on which isotonic curves are interpolated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XScale {
    Natural,
    #[default]
    Log,
}

impl XScale {
    fn forward(&self, x: f64) -> f64 {
        match self {
            XScale::Natural => x,
            XScale::Log => x.ln(),
        }
    }

    /// Value on this axis → log stimulus (−∞ for nonpositive natural values).
    fn to_log(&self, u: f64) -> f64 {
        match self {
            XScale::Natural if u > 0.0 => u.ln(),
            XScale::Natural => f64::NEG_INFINITY,
            XScale::Log => u,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoNode {
    /// Node location on the fit's axis.
    pub x: f64,
    pub rate: f64,
    /// Trials pooled into the node.
    pub weight: f64,
    /// Observed positives pooled into the node.
    pub positives: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicFit {
    pub nodes: Vec<IsoNode>,
    pub centred: bool,
    pub scale: XScale,
}

struct Level {
    x: f64,
    rate: f64,
    trials: f64,
    positives: f64,
}

fn levels(data: &Dataset, scale: XScale) -> Vec<Level> {
    data.level_counts()
        .into_iter()
        .map(|l| Level {
            x: scale.forward(l.stimulus),
            rate: l.positives as f64 / l.trials as f64,
            trials: l.trials as f64,
            positives: l.positives as f64,
        })
        .collect()
}

/// Weighted pool-adjacent-violators; returns blocks as index ranges and means.
fn pav_blocks(y: &[f64], w: &[f64]) -> Vec<(usize, usize, f64, f64)> {
    // (start, end exclusive, mean, weight)
    let mut blocks: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        blocks.push((i, i + 1, y[i], w[i]));
        while blocks.len() > 1 {
            let b = blocks[blocks.len() - 1];
            let a = blocks[blocks.len() - 2];
            if a.2 > b.2 {
                let wt = a.3 + b.3;
                let m = (a.2 * a.3 + b.2 * b.3) / wt;
                blocks.pop();
                *blocks.last_mut().unwrap() = (a.0, b.1, m, wt);
            } else {
                break;
            }
        }
    }
    blocks
}

/// Per-level PAVA fit (one node per distinct stimulus).
pub fn pava(data: &Dataset) -> IsotonicFit {
    pava_on(data, XScale::Natural)
}

fn pava_on(data: &Dataset, scale: XScale) -> IsotonicFit {
    let lv = levels(data, scale);
    let y: Vec<f64> = lv.iter().map(|l| l.rate).collect();
    let w: Vec<f64> = lv.iter().map(|l| l.trials).collect();
    let mut nodes = Vec::with_capacity(lv.len());
    for (s, e, m, _) in pav_blocks(&y, &w) {
        for l in &lv[s..e] {
            nodes.push(IsoNode {
                x: l.x,
                rate: m,
                weight: l.trials,
                positives: l.positives,
            });
        }
    }
    IsotonicFit {
        nodes,
        centred: false,
        scale,
    }
}

/// Collapse runs of equal fitted rates to single nodes at their
/// trial-weighted mean location.
fn centre(lv: &[Level], fitted: &[f64], scale: XScale) -> IsotonicFit {
    let mut nodes: Vec<IsoNode> = Vec::new();
    let mut xw: Vec<f64> = Vec::new();
    for (l, &r) in lv.iter().zip(fitted) {
        match nodes.last_mut() {
            Some(n) if n.rate == r => {
                n.weight += l.trials;
                n.positives += l.positives;
                *xw.last_mut().unwrap() += l.x * l.trials;
            }
            _ => {
                nodes.push(IsoNode {
                    x: 0.0,
                    rate: r,
                    weight: l.trials,
                    positives: l.positives,
                });
                xw.push(l.x * l.trials);
            }
        }
    }
    for (n, s) in nodes.iter_mut().zip(xw) {
        n.x = s / n.weight;
    }
    IsotonicFit {
        nodes,
        centred: true,
        scale,
    }
}

fn centred_fit(lv: &[Level], rates: &[f64], scale: XScale) -> IsotonicFit {
    let w: Vec<f64> = lv.iter().map(|l| l.trials).collect();
    let mut fitted = vec![0.0; lv.len()];
    for (s, e, m, _) in pav_blocks(rates, &w) {
        fitted[s..e].fill(m);
    }
    centre(lv, &fitted, scale)
}

/// Centred isotonic regression of the observed rates.
pub fn cir(data: &Dataset, scale: XScale) -> IsotonicFit {
    let lv = levels(data, scale);
    let rates: Vec<f64> = lv.iter().map(|l| l.rate).collect();
    centred_fit(&lv, &rates, scale)
}

/// CIR after adding one pseudo-observation at the target to every level:
/// rate (y + p)/(n + 1), weight n.
pub fn cir_shrunk(data: &Dataset, p: f64, scale: XScale) -> IsotonicFit {
    let lv = levels(data, scale);
    let rates: Vec<f64> = lv
        .iter()
        .map(|l| (l.positives + p) / (l.trials + 1.0))
        .collect();
    centred_fit(&lv, &rates, scale)
}

impl IsotonicFit {
    pub fn rate_span(&self) -> (f64, f64) {
        (
            self.nodes.first().map_or(f64::NAN, |n| n.rate),
            self.nodes.last().map_or(f64::NAN, |n| n.rate),
        )
    }

    /// Piecewise-linear curve value at `x`, flat outside the nodes.
    pub fn eval(&self, x: f64) -> f64 {
        let n = &self.nodes;
        if x <= n[0].x {
            return n[0].rate;
        }
        if x >= n[n.len() - 1].x {
            return n[n.len() - 1].rate;
        }
        let k = n.partition_point(|v| v.x <= x);
        let (a, b) = (&n[k - 1], &n[k]);
        a.rate + (b.rate - a.rate) * (x - a.x) / (b.x - a.x)
    }

    /// Curve value with the end segments extended linearly.
    fn eval_extended(&self, x: f64) -> f64 {
        let n = &self.nodes;
        let m = n.len();
        if x < n[0].x {
            let s = (n[1].rate - n[0].rate) / (n[1].x - n[0].x);
            return n[0].rate - s * (n[0].x - x);
        }
        if x > n[m - 1].x {
            let s = (n[m - 1].rate - n[m - 2].rate) / (n[m - 1].x - n[m - 2].x);
            return n[m - 1].rate + s * (x - n[m - 1].x);
        }
        self.eval(x)
    }

    /// Inverse of [`eval_extended`](Self::eval_extended) for a strictly
    /// increasing centred fit with at least two nodes.
    fn invert_extended(&self, g: f64) -> f64 {
        let n = &self.nodes;
        let m = n.len();
        if g < n[0].rate {
            let s = (n[1].rate - n[0].rate) / (n[1].x - n[0].x);
            return n[0].x - (n[0].rate - g) / s;
        }
        if g > n[m - 1].rate {
            let s = (n[m - 1].rate - n[m - 2].rate) / (n[m - 1].x - n[m - 2].x);
            return n[m - 1].x + (g - n[m - 1].rate) / s;
        }
        interpolate_inverse(n, g)
    }
}

fn interpolate_inverse(n: &[IsoNode], p: f64) -> f64 {
    let k = n.partition_point(|v| v.rate < p);
    if k < n.len() && n[k].rate == p {
        return n[k].x;
    }
    let (a, b) = (&n[k - 1], &n[k]);
    a.x + (b.x - a.x) * (p - a.rate) / (b.rate - a.rate)
}

/// Location on the fit's axis where the centred curve crosses `p`.
pub fn invert_fit(fit: &IsotonicFit, p: f64) -> Result<f64> {
    crate::model::check_probability(p)?;
    let (low, high) = fit.rate_span();
    if fit.nodes.is_empty() || !(p >= low && p <= high) {
        return Err(Error::OutOfRange { p, low, high });
    }
    if fit.nodes.len() == 1 {
        return Ok(fit.nodes[0].x);
    }
    Ok(interpolate_inverse(&fit.nodes, p))
}

/// Agresti–Coull interval for a binomial proportion.
fn agresti_coull(y: f64, n: f64, z: f64) -> (f64, f64) {
    let nt = n + z * z;
    let pt = (y + z * z / 2.0) / nt;
    let h = z * (pt * (1.0 - pt) / nt).sqrt();
    ((pt - h).max(0.0), (pt + h).min(1.0))
}

/// CIR estimate of ξ₁₀₀ₚ with a local-inversion interval.
///
/// The point inverts the shrunk CIR curve at `p`. The interval takes the
/// binomial uncertainty of the observed CIR curve at the node nearest the
/// estimate and maps it through the observed curve's local slopes:
/// the lower limit is where the curve sits `U − p` below its value at the
/// estimate, the upper limit where it sits `p − L` above, with `[L, U]` the
/// Agresti–Coull interval of the node's pooled counts.
pub fn cir_quantile(data: &Dataset, p: f64, level: f64, scale: XScale) -> Result<QuantileEstimate> {
    check_level(level)?;
    crate::model::check_probability(p)?;
    if data.is_empty() {
        return Err(Error::Dataset("no trials to estimate from".into()));
    }
    let shrunk = cir_shrunk(data, p, scale);
    let xhat = invert_fit(&shrunk, p)?;
    let obs = cir(data, scale);
    let m = scale.to_log(xhat);
    let (lo, hi, shape) = if obs.nodes.len() < 2 {
        (f64::NEG_INFINITY, f64::INFINITY, IntervalShape::WholeLine)
    } else {
        let k = obs
            .nodes
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.x - xhat).abs().total_cmp(&(b.1.x - xhat).abs()))
            .map(|(i, _)| i)
            .unwrap();
        let node = &obs.nodes[k];
        let (l, u) = agresti_coull(node.positives, node.weight, normal::two_sided_z(level));
        let du = (u - p).max(0.0);
        let dl = (p - l).max(0.0);
        let g = obs.eval_extended(xhat);
        let lcl = obs.invert_extended(g - du);
        let ucl = obs.invert_extended(g + dl);
        let (llo, lhi) = (scale.to_log(lcl), scale.to_log(ucl));
        let shape = if llo.is_finite() && lhi.is_finite() {
            IntervalShape::Bounded
        } else {
            IntervalShape::HalfLine
        };
        (llo, lhi, shape)
    };
    Ok(QuantileEstimate::from_log(p, level, Method::CirDelta, m, lo, hi, shape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixture;
    use proptest::prelude::*;

    fn rates(f: &IsotonicFit) -> Vec<f64> {
        f.nodes.iter().map(|n| n.rate).collect()
    }

    #[test]
    fn pava_examples() {
        let d = Dataset::from_pairs("N", &[(1.0, 1), (1.0, 0), (2.0, 0), (2.0, 0)]);
        assert_eq!(rates(&pava(&d)), [0.25, 0.25]);
        let d = Dataset::from_pairs("N", &[(1.0, 0), (2.0, 0), (2.0, 1), (3.0, 1)]);
        assert_eq!(rates(&pava(&d)), [0.0, 0.5, 1.0]);
    }

    #[test]
    fn petn_bcd_observed_rates() {
        let d = fixture("petn_table5").unwrap();
        let f = pava(&d);
        assert_eq!(rates(&f), [0.0, 2.0 / 19.0, 1.0]);
        let c = cir(&d, XScale::Natural);
        assert_eq!(rates(&c), [0.0, 2.0 / 19.0, 1.0]);
        assert_eq!(c.nodes.iter().map(|n| n.x).collect::<Vec<_>>(), [40.0, 60.0, 80.0]);
    }

    #[test]
    fn cir_centres_flat_stretch() {
        // rates 1/2, 0, 1 → PAVA pools the first two at 1/4
        let d = Dataset::from_pairs("N", &[(1.0, 1), (1.0, 0), (2.0, 0), (2.0, 0), (4.0, 1)]);
        let c = cir(&d, XScale::Natural);
        assert_eq!(c.nodes.len(), 2);
        assert!((c.nodes[0].x - 1.5).abs() < 1e-15);
        assert_eq!(c.nodes[0].weight, 4.0);
        assert_eq!(c.nodes[0].positives, 1.0);
    }

    #[test]
    fn single_level_single_node() {
        let d = Dataset::from_pairs("N", &[(5.0, 1), (5.0, 0)]);
        let c = cir(&d, XScale::Natural);
        assert_eq!(c.nodes.len(), 1);
        assert_eq!(c.nodes[0].x, 5.0);
        assert_eq!(invert_fit(&c, 0.5).unwrap(), 5.0);
    }

    #[test]
    fn exact_crossing_at_node() {
        let fit = IsotonicFit {
            nodes: vec![
                IsoNode { x: 10.0, rate: 0.0, weight: 1.0, positives: 0.0 },
                IsoNode { x: 20.0, rate: 0.3, weight: 1.0, positives: 0.0 },
                IsoNode { x: 30.0, rate: 0.9, weight: 1.0, positives: 0.0 },
            ],
            centred: true,
            scale: XScale::Natural,
        };
        assert_eq!(invert_fit(&fit, 0.3).unwrap(), 20.0);
        assert!(matches!(invert_fit(&fit, 0.95), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn petn_estimates() {
        let q = cir_quantile(&fixture("petn_table5").unwrap(), 0.1, 0.9, XScale::Natural).unwrap();
        // (0.1 − 0.01)/(0.105 − 0.01) of the way from 40 to 60
        assert!((q.point - (40.0 + 20.0 * 0.09 / 0.095)).abs() < 1e-9);
        assert!((q.point - 58.95).abs() < 0.01);
        assert!((q.ci_low - 23.47).abs() / 23.47 < 0.10, "{q:?}");
        assert!((q.ci_high - 61.87).abs() / 61.87 < 0.10, "{q:?}");
        let q = cir_quantile(&fixture("petn_table6").unwrap(), 0.1, 0.9, XScale::Natural).unwrap();
        assert!((q.point - 38.17).abs() < 0.01, "{q:?}");
        assert!((q.ci_low - 18.83).abs() / 18.83 < 0.10, "{q:?}");
        assert!((q.ci_high - 61.79).abs() / 61.79 < 0.10, "{q:?}");
    }

    #[test]
    fn out_of_range_reports_span() {
        let d = Dataset::from_pairs("N", &[(1.0, 0), (2.0, 0), (3.0, 0)]);
        match cir_quantile(&d, 0.9, 0.9, XScale::Log) {
            Err(Error::OutOfRange { low, high, .. }) => assert!(low <= high && high < 0.9),
            other => panic!("{other:?}"),
        }
    }

    /// Exhaustive oracle: best monotone fit over all partitions of the
    /// levels into consecutive pooled blocks.
    fn oracle(y: &[f64], w: &[f64]) -> Vec<f64> {
        let m = y.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << (m - 1)) {
            let mut fitted = vec![0.0; m];
            let mut start = 0;
            for i in 0..m {
                let cut = i == m - 1 || mask & (1 << i) != 0;
                if cut {
                    let (sy, sw) = (start..=i).fold((0.0, 0.0), |(a, b), j| (a + y[j] * w[j], b + w[j]));
                    fitted[start..=i].fill(sy / sw);
                    start = i + 1;
                }
            }
            if fitted.windows(2).any(|p| p[0] > p[1] + 1e-12) {
                continue;
            }
            let sse: f64 = (0..m).map(|j| w[j] * (y[j] - fitted[j]).powi(2)).sum();
            if best.as_ref().is_none_or(|b| sse < b.0 - 1e-12) {
                best = Some((sse, fitted));
            }
        }
        best.unwrap().1
    }

    proptest! {
        #[test]
        fn pava_matches_exhaustive_oracle(levels in proptest::collection::vec((1usize..=3, 0usize..=3), 1..=5)) {
            let mut pairs = Vec::new();
            for (i, &(n, r)) in levels.iter().enumerate() {
                let r = r.min(n);
                for j in 0..n {
                    pairs.push(((i + 1) as f64, u8::from(j < r)));
                }
            }
            let d = Dataset::from_pairs("N", &pairs);
            let fit = pava(&d);
            let lc = d.level_counts();
            let y: Vec<f64> = lc.iter().map(|l| l.positives as f64 / l.trials as f64).collect();
            let w: Vec<f64> = lc.iter().map(|l| l.trials as f64).collect();
            let o = oracle(&y, &w);
            for (a, b) in rates(&fit).iter().zip(&o) {
                prop_assert!((a - b).abs() < 1e-12, "{:?} vs {:?}", rates(&fit), o);
            }
        }

        #[test]
        fn cir_is_monotone_and_continuous(pairs in proptest::collection::vec((1.0f64..50.0, 0u8..2), 1..40)) {
            let d = Dataset::from_pairs("N", &pairs);
            let f = cir(&d, XScale::Log);
            prop_assert!(f.nodes.windows(2).all(|w| w[0].rate < w[1].rate && w[0].x < w[1].x));
            prop_assert!(f.nodes.iter().all(|n| (0.0..=1.0).contains(&n.rate)));
            let lo = f.nodes[0].x - 1.0;
            let hi = f.nodes[f.nodes.len() - 1].x + 1.0;
            let mut prev = f.eval(lo);
            for i in 1..=400 {
                let x = lo + (hi - lo) * i as f64 / 400.0;
                let v = f.eval(x);
                prop_assert!(v >= prev - 1e-15);
                prop_assert!(v - prev < 0.5 + 1e-12 || f.nodes.len() == 1);
                prev = v;
            }
            let p = pava_on(&d, XScale::Log);
            let strictly = p.nodes.windows(2).all(|w| w[0].rate < w[1].rate);
            if strictly {
                prop_assert_eq!(rates(&p), rates(&f));
            }
        }
    }
}
