//! Same specimen model, same staircase rules, two interpretations of the
//! load grid.

use sensitest::design::{UnStaircaseConfig, UnVariant};
use sensitest::grid::{all_intermediate_grid, notch6_grid};
use sensitest::model::{ProbitTheta, ResponseModel};
use sensitest::sim::un_grid_comparison;

fn main() -> sensitest::error::Result<()> {
    let s: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20_000);
    let model = ResponseModel::probit_log(ProbitTheta::PETN_REFERENCE);
    let (a, b) = (notch6_grid(), all_intermediate_grid());
    let template = UnStaircaseConfig::preset(UnVariant::F1, a.clone(), None)?.with_threshold(80.0);
    let cmp = un_grid_comparison(&model, &a, &b, &template, s, 1)?;
    for g in [&cmp.a, &cmp.b] {
        println!(
            "{:<17} sensitive {:5.1}%  mean trials {:6.2}  floor hits {}",
            g.grid,
            100.0 * g.classification_rate.unwrap_or(f64::NAN),
            g.mean_trials,
            g.floor_hits
        );
        for c in &g.distribution {
            let v = c.value.map_or("none".to_string(), |v| format!("{v} N"));
            println!("    {v:>8}  {:6.3}", c.frequency);
        }
    }
    Ok(())
}
