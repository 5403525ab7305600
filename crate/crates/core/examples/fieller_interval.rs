//! Probit MLE and Fieller interval for an up-and-down run.

use sensitest::dataset::Dataset;
use sensitest::design::{DesignConfig, DesignState, UpDownConfig};
use sensitest::estimate::{fieller_ci, fit_probit_mle};
use sensitest::model::{ProbitTheta, ResponseModel};
use sensitest::rng::{bernoulli, stream_rng, RngState};

fn main() -> sensitest::error::Result<()> {
    let model = ResponseModel::probit_log(ProbitTheta::PETN_REFERENCE);
    let mut cfg = UpDownConfig::new(360.0, 0.2);
    cfg.n = Some(100);
    let mut st = DesignState::new(DesignConfig::UpDown(cfg), RngState::default())?;
    let mut rng = stream_rng(5, 0);
    while let Some(next) = st.next.clone() {
        st.record(bernoulli(&mut rng, model.cdf(next.stimulus)))?;
    }
    let data = Dataset::new("N", st.history);
    let fit = fit_probit_mle(&data)?;
    println!(
        "alpha = {:.3}, beta = {:.3} ({} iterations)",
        fit.theta_hat.alpha, fit.theta_hat.beta, fit.iterations
    );
    for p in [0.1, 0.5, 0.9] {
        match fieller_ci(&fit, p, 0.9) {
            Ok(q) => println!(
                "xi({p}) = {:.1} N  true {:.1} N  90% CI [{:.1}, {:.1}] ({:?})",
                q.point,
                model.quantile(p)?,
                q.ci_low,
                q.ci_high,
                q.shape
            ),
            Err(e) => println!("xi({p}): {e}"),
        }
    }
    Ok(())
}
