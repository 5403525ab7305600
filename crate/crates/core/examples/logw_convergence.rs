//! Likelihood-ratio statistic from up-and-down runs against its
//! chi-square(1) limit.

use sensitest::model::ProbitTheta;
use sensitest::sim::logw_study;

fn main() -> sensitest::error::Result<()> {
    for n in [30, 50, 100] {
        let st = logw_study(ProbitTheta::PETN_REFERENCE, 360.0, 0.2, n, 5_000, 3)?;
        println!(
            "n={n:>3}  KS distance {:.4}  undefined {:>3} ({:.2}%)",
            st.ks_distance,
            st.undefined_count,
            100.0 * st.undefined_fraction()
        );
    }
    Ok(())
}
