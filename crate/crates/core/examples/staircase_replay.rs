//! Replay the two recorded friction-sensitivity staircases and run a fresh
//! one against a simulated specimen.

use sensitest::dataset::fixture;
use sensitest::design::{un_staircase_run, UnStaircaseConfig, UnVariant};
use sensitest::grid::{all_intermediate_grid, notch6_grid};
use sensitest::model::{ProbitTheta, ResponseModel};
use sensitest::rng::{bernoulli, stream_rng};

fn main() -> sensitest::error::Result<()> {
    for (table, grid) in [("petn_table3", notch6_grid()), ("petn_table4", all_intermediate_grid())] {
        let cfg = UnStaircaseConfig::preset(UnVariant::F1, grid, None)?.with_threshold(80.0);
        let data = fixture(table)?;
        let (r, terminated) = sensitest::cli::replay_staircase(&cfg, &data)?;
        println!(
            "{table}: limiting stimulus {:?} N, {:?}, {} trials, terminated: {terminated}",
            r.value,
            r.classification,
            r.trials.len()
        );
    }

    let model = ResponseModel::probit_log(ProbitTheta::PETN_REFERENCE);
    let mut rng = stream_rng(42, 0);
    let cfg = UnStaircaseConfig::preset(UnVariant::F1, all_intermediate_grid(), None)?.with_threshold(80.0);
    let r = un_staircase_run(&cfg, |x| Ok(bernoulli(&mut rng, model.cdf(x))))?;
    println!("\nsimulated specimen:");
    for t in &r.trials {
        println!("  {:>2}  {:>5} N  {:<6} {}", t.index, t.stimulus, t.grid_label.as_deref().unwrap_or(""), t.outcome);
    }
    println!("limiting stimulus {:?} N, {:?}", r.value, r.classification);
    Ok(())
}
