//! Isotonic (CIR) estimate of the 10% point from tabulated drop-weight data.

use sensitest::dataset::fixture;
use sensitest::estimate::{cir, cir_quantile, pava, XScale};

fn main() -> sensitest::error::Result<()> {
    for table in ["petn_table5", "petn_table6"] {
        let data = fixture(table)?;
        println!("{table}:");
        let raw = pava(&data);
        let fit = cir(&data, XScale::Natural);
        for n in &raw.nodes {
            println!("  x={:>5}  n={:>2}  pava {:.3}", n.x, n.weight, n.rate);
        }
        println!("  cir nodes: {}", fit.nodes.len());
        let q = cir_quantile(&data, 0.10, 0.90, XScale::Natural)?;
        println!("  xi(0.1) = {:.2} N, 90% CI [{:.2}, {:.2}]\n", q.point, q.ci_low, q.ci_high);
    }
    Ok(())
}
