//! Drive a persisted session directly, then reopen the store.

use sensitest::design::{DesignConfig, UnStaircaseConfig, UnVariant};
use sensitest::grid::notch6_grid;
use sensitest::session::{OutcomeRequest, SessionSpec, SessionStore};
use sensitest::sim::ExportFormat;

fn main() -> sensitest::error::Result<()> {
    let dir = std::env::temp_dir().join(format!("sensitest-example-{}", std::process::id()));
    let store = SessionStore::open(&dir, 0)?;
    let cfg = UnStaircaseConfig::preset(UnVariant::F1, notch6_grid(), None)?.with_threshold(80.0);
    let mut view = store.create(SessionSpec::new(DesignConfig::Un(cfg), "PETN", "N"))?;
    let id = view.id.clone();

    for y in [1, 1, 1, 1, 0, 1, 0, 0] {
        let rec = view.recommendation.clone().expect("still running");
        println!("trial {}: {} N -> {y}", rec.seq + 1, rec.stimulus);
        view = store.record(&id, &OutcomeRequest::new(y, rec.seq))?;
    }
    drop(store);

    let store = SessionStore::open(&dir, 0)?;
    let view = store.get(&id)?;
    println!("reopened {id}: {} trials, next {:?}", view.seq, view.recommendation.map(|r| r.stimulus));
    print!("{}", store.export(&id, ExportFormat::Csv)?);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
