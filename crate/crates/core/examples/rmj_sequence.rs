//! Robbins-Monro-Joseph stochastic approximation toward the 90% point.

use sensitest::design::{DesignConfig, DesignState, RmjConfig};
use sensitest::estimate::rmj_estimate;
use sensitest::model::{Family, ResponseModel};
use sensitest::rng::{bernoulli, stream_rng, RngState};

fn main() -> sensitest::error::Result<()> {
    let model = ResponseModel::standard(Family::Normal);
    let p = 0.9;
    let cfg = RmjConfig::new(1.0, p, 30);
    // start at the model location on the design axis
    let mut st = DesignState::new_at(DesignConfig::Rmj(cfg), RngState::default(), 0.0)?;
    let mut rng = stream_rng(11, 0);
    while let Some(next) = st.next.clone() {
        let y = bernoulli(&mut rng, model.cdf_design(next.log_stimulus));
        println!("{:>2}  x = {:+.3}  y = {y}", st.history.len() + 1, next.log_stimulus);
        st.record(y)?;
    }
    let q = rmj_estimate(&st, 0.9)?;
    println!(
        "estimate {:+.3}, true {:+.3}, 90% interval [{:+.3}, {:+.3}]",
        q.log_point,
        model.quantile_design(p)?,
        q.log_ci_low,
        q.log_ci_high
    );
    Ok(())
}
