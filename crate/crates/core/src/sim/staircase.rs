//! Limiting-stimulus distributions of a UN staircase under two grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{classify, un_simulate, Classification, UnStaircaseConfig};
use crate::error::Result;
use crate::grid::StimulusGrid;
use crate::model::ResponseModel;
use crate::rng::{bernoulli, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitingCount {
    /// `None` for type I runs that never saw a positive.
    pub value: Option<f64>,
    pub count: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub grid: String,
    pub distribution: Vec<LimitingCount>,
    /// Fraction classified sensitive (runs without a value count as
    /// insensitive).
    pub classification_rate: Option<f64>,
    pub mean_trials: f64,
    pub floor_hits: usize,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridComparison {
    pub model: ResponseModel,
    pub template: UnStaircaseConfig,
    pub seed: u64,
    pub a: GridSummary,
    pub b: GridSummary,
}

fn summarize(model: &ResponseModel, cfg: &UnStaircaseConfig, s: usize, seed: u64) -> Result<GridSummary> {
    cfg.validate()?;
    let probs: Vec<f64> = cfg.grid.values().iter().map(|&x| model.cdf(x)).collect();
    let runs: Vec<(Option<f64>, usize, bool)> = (0..s)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            un_simulate(cfg, |i| bernoulli(&mut rng, probs[i]))
        })
        .collect();
    let mut counts: Vec<(Option<usize>, usize)> = Vec::new();
    let mut by_level = vec![0usize; cfg.grid.len()];
    let mut none = 0;
    let (mut trials, mut floor_hits, mut sensitive) = (0usize, 0usize, 0usize);
    for (v, n, floor) in &runs {
        trials += n;
        floor_hits += usize::from(*floor);
        match v {
            Some(x) => {
                let i = cfg.grid.index_of(*x).expect("limiting value lies on the grid");
                by_level[i] += 1;
                if let Some(t) = cfg.threshold {
                    sensitive += usize::from(classify(*x, t) == Classification::Sensitive);
                }
            }
            None => none += 1,
        }
    }
    if none > 0 {
        counts.push((None, none));
    }
    counts.extend(by_level.iter().enumerate().filter(|c| *c.1 > 0).map(|(i, &c)| (Some(i), c)));
    Ok(GridSummary {
        grid: cfg.grid.name.clone().unwrap_or_else(|| "custom".into()),
        distribution: counts
            .into_iter()
            .map(|(i, c)| LimitingCount {
                value: i.map(|i| cfg.grid.get(i)),
                count: c,
                frequency: c as f64 / s as f64,
            })
            .collect(),
        classification_rate: cfg.threshold.map(|_| sensitive as f64 / s as f64),
        mean_trials: trials as f64 / s as f64,
        floor_hits,
        replicates: s,
    })
}

/// Run the staircase `template` on `grid_a` and `grid_b` against the same
/// true model, `s` replicates each. Replicate `r` uses stream `r` on both
/// grids.
pub fn un_grid_comparison(
    model: &ResponseModel,
    grid_a: &StimulusGrid,
    grid_b: &StimulusGrid,
    template: &UnStaircaseConfig,
    s: usize,
    seed: u64,
) -> Result<GridComparison> {
    model.validate()?;
    if s == 0 {
        return Err(crate::error::Error::config("S", "at least one replicate is required"));
    }
    let on = |g: &StimulusGrid| UnStaircaseConfig {
        grid: g.clone(),
        ..template.clone()
    };
    Ok(GridComparison {
        model: *model,
        template: template.clone(),
        seed,
        a: summarize(model, &on(grid_a), s, seed)?,
        b: summarize(model, &on(grid_b), s, seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{LimitingType, UnVariant};
    use crate::grid::{all_intermediate_grid, notch6_grid};
    use crate::model::{Family, ProbitTheta};

    fn f1(grid: StimulusGrid) -> UnStaircaseConfig {
        UnStaircaseConfig::preset(UnVariant::F1, grid, None).unwrap().with_threshold(80.0)
    }

    /// Closed form for a descent-only type I staircase started at the top:
    /// level i is left downward with probability 1 − (1 − Fᵢ)^K and costs
    /// (1 − (1 − Fᵢ)^K)/Fᵢ trials in expectation.
    fn exact_f1(model: &ResponseModel, grid: &StimulusGrid, k: i32, threshold: f64) -> (f64, f64) {
        let v = grid.values();
        let mut reach = 1.0;
        let (mut sens, mut trials) = (0.0, 0.0);
        for i in (0..v.len()).rev() {
            let f = model.cdf(v[i]);
            let stay = (1.0 - f).powi(k);
            trials += reach * if f > 0.0 { (1.0 - stay) / f } else { k as f64 };
            let stop_here = reach * stay;
            // stopping below the top reports the level above
            if i + 1 < v.len() && v[i + 1] < threshold {
                sens += stop_here;
            }
            reach *= 1.0 - stay;
            if i == 0 && v[0] < threshold {
                sens += reach;
            }
        }
        (sens, trials)
    }

    #[test]
    fn matches_exact_chain() {
        let model = ResponseModel::probit_log(ProbitTheta::PETN_REFERENCE);
        let (a, b) = (notch6_grid(), all_intermediate_grid());
        let cmp = un_grid_comparison(&model, &a, &b, &f1(a.clone()), 40_000, 5).unwrap();
        for (sum, grid) in [(&cmp.a, &a), (&cmp.b, &b)] {
            let (rate, trials) = exact_f1(&model, grid, 6, 80.0);
            let r = sum.classification_rate.unwrap();
            assert!((r - rate).abs() < 4.0 * (rate * (1.0 - rate) / 40_000.0).sqrt(), "{r} vs {rate}");
            assert!((sum.mean_trials - trials).abs() < 0.06 * trials.sqrt(), "{} vs {trials}", sum.mean_trials);
            let total: usize = sum.distribution.iter().map(|c| c.count).sum();
            assert_eq!(total, 40_000);
        }
    }

    #[test]
    fn all_negative_model_stops_at_start() {
        let dead = ResponseModel::new(Family::Uniform, 1e6, 1.0);
        let g = notch6_grid();
        let cmp = un_grid_comparison(&dead, &g, &g, &f1(g.clone()), 100, 1).unwrap();
        assert_eq!(cmp.a.mean_trials, 6.0);
        assert_eq!(cmp.a.distribution.len(), 1);
        assert_eq!(cmp.a.distribution[0].value, None);
        assert_eq!(cmp.a.classification_rate, Some(0.0));
    }

    #[test]
    fn type_ii_reports_terminal_level() {
        let model = ResponseModel::probit_log(ProbitTheta::PETN_REFERENCE);
        let g = notch6_grid();
        let mut t = f1(g.clone());
        t.limiting_type = LimitingType::II;
        let cmp = un_grid_comparison(&model, &g, &g, &t, 2000, 2).unwrap();
        assert!(cmp.a.distribution.iter().all(|c| c.value.is_some()));
        assert_eq!(cmp.a, cmp.b);
    }
}
