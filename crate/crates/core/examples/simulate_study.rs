//! Compare the three sequential procedures on one response model.

use sensitest::model::{Family, ResponseModel};
use sensitest::sim::{run_study, Procedure, StudyConfig};

fn main() -> sensitest::error::Result<()> {
    let model = ResponseModel::standard(Family::Normal);
    println!("{:<12} {:>5} {:>8} {:>8} {:>8} {:>9}", "procedure", "p", "mse", "width", "coverage", "undefined");
    for p in [0.1, 0.5, 0.9] {
        for proc in Procedure::ALL {
            let cfg = StudyConfig::for_procedure(model, proc, p, 30, 2_000).with_seed(9);
            let r = run_study(&cfg)?;
            let f = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.4}"));
            println!(
                "{:<12} {:>5} {:>8} {:>8} {:>8} {:>9}",
                proc.name(),
                p,
                f(r.mse),
                f(r.mean_ci_width),
                f(r.coverage),
                r.undefined_count
            );
        }
    }
    Ok(())
}
