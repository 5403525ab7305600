//! Acceptance report: one PASS/FAIL line per primary criterion.
//!
//! Runs as a plain binary (`cargo test --test acceptance`). It exits
//! nonzero on a FAIL only when `ACCEPTANCE_STRICT` is set.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use chrono::Utc;
use sensitest::dataset::{fixture, Dataset};
use sensitest::design::{
    BcdConfig, DesignConfig, DesignState, RmjConfig, UnStaircaseConfig, UnVariant, UpDownConfig,
};
use sensitest::estimate::{cir_quantile, fisher_information, fit_probit_mle, log_likelihood, pava, score, XScale};
use sensitest::grid::{all_intermediate_grid, builtin_grid, notch6_grid};
use sensitest::model::{Family, ProbitTheta, ResponseModel};
use sensitest::rng::{bernoulli, stream_rng, uniform, RngState};
use sensitest::session::{log_to_jsonl, parse_log, OutcomeRequest, Session, SessionSpec};
use sensitest::sim::{logw_study, run_study, un_grid_comparison, MetricsRow, Procedure, StudyPlan};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

const THETA0: ProbitTheta = ProbitTheta::PETN_REFERENCE;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, name: &str, ok: bool, secs: f64) {
        if !ok {
            self.failures += 1;
        }
        println!("{} {name} ({secs:.1}s)", if ok { "PASS" } else { "FAIL" });
    }
}

fn detail(s: impl AsRef<str>) {
    println!("    {}", s.as_ref());
}

fn check(ok: bool, s: impl AsRef<str>) -> bool {
    detail(format!("[{}] {}", if ok { "ok" } else { "miss" }, s.as_ref()));
    ok
}

fn staircase_replay(cfg: UnStaircaseConfig, ds: &Dataset) -> (Option<f64>, Option<sensitest::design::Classification>, bool) {
    let mut st = DesignState::new(DesignConfig::Un(cfg), RngState::default()).unwrap();
    for t in &ds.trials {
        let next = st.next.clone().expect("staircase still running");
        assert_eq!(next.stimulus, t.stimulus, "trial {}", t.index);
        st.record(t.outcome).unwrap();
    }
    let r = st.un_result().unwrap();
    (r.value, r.classification, st.is_terminated())
}

fn petn_staircases() -> bool {
    use sensitest::design::Classification::*;
    let start = Instant::now();
    let f1 = |g| UnStaircaseConfig::preset(UnVariant::F1, g, None).unwrap().with_threshold(80.0);
    let (v3, c3, t3) = staircase_replay(f1(notch6_grid()), &fixture("petn_table3").unwrap());
    let (v4, c4, t4) = staircase_replay(f1(all_intermediate_grid()), &fixture("petn_table4").unwrap());
    let secs = start.elapsed().as_secs_f64();
    let a = check(v3 == Some(80.0) && c3 == Some(Insensitive) && t3, format!("petn_table3, notch6 grid: {v3:?} N, {c3:?}"));
    let b = check(v4 == Some(48.0) && c4 == Some(Sensitive) && t4, format!("petn_table4, all-intermediate grid: {v4:?} N, {c4:?}"));
    let c = check(secs < 1.0, format!("runtime {secs:.4}s < 1s"));
    a && b && c
}

fn petn_cir() -> bool {
    let mut ok = true;
    for (table, point, lo, hi) in [("petn_table5", 58.95, 23.47, 61.87), ("petn_table6", 38.17, 18.83, 61.79)] {
        let q = cir_quantile(&fixture(table).unwrap(), 0.10, 0.90, XScale::Natural).unwrap();
        let rel = |got: f64, want: f64| (got - want).abs() / want;
        ok &= check(
            (q.point - point).abs() <= 1.0 && rel(q.ci_low, lo) <= 0.10 && rel(q.ci_high, hi) <= 0.10,
            format!(
                "{table}: {:.3} [{:.3}, {:.3}] vs {point} [{lo}, {hi}] (point off {:.3}, ends off {:.1}% / {:.1}%)",
                q.point,
                q.ci_low,
                q.ci_high,
                (q.point - point).abs(),
                100.0 * rel(q.ci_low, lo),
                100.0 * rel(q.ci_high, hi)
            ),
        );
    }
    ok
}

fn grid_study() -> bool {
    let s = 100_000;
    let model = ResponseModel::probit_log(THETA0);
    let (a, b) = (notch6_grid(), all_intermediate_grid());
    let template = UnStaircaseConfig::preset(UnVariant::F1, a.clone(), None).unwrap().with_threshold(80.0);
    let cmp = un_grid_comparison(&model, &a, &b, &template, s, 20_250_102).unwrap();
    let mut ok = true;
    for (g, rate, trials) in [(&cmp.a, 0.766, 15.12), (&cmp.b, 0.876, 36.98)] {
        let r = g.classification_rate.unwrap();
        let tol_t = if trials < 20.0 { 0.3 } else { 0.5 };
        ok &= check(
            (r - rate).abs() <= 0.010,
            format!("{}: sensitive {:.2}% vs {:.1}% +/- 1.0pp (S={s})", g.grid, 100.0 * r, 100.0 * rate),
        );
        ok &= check(
            (g.mean_trials - trials).abs() <= tol_t,
            format!("{}: mean trials {:.3} vs {trials} +/- {tol_t}", g.grid, g.mean_trials),
        );
    }
    ok
}

fn chi2() -> bool {
    let st = logw_study(THETA0, 360.0, 0.2, 100, 10_000, 20_250_103).unwrap();
    let st30 = logw_study(THETA0, 360.0, 0.2, 30, 10_000, 20_250_103).unwrap();
    let a = check(st.ks_distance < 0.03, format!("KS distance at n=100: {:.4} < 0.03", st.ks_distance));
    let b = check(st.undefined_count == 0, format!("undefined MLE at n=100: {}", st.undefined_count));
    let c = check(
        st30.undefined_fraction() < 0.01,
        format!("undefined MLE at n=30: {:.2}% < 1%", 100.0 * st30.undefined_fraction()),
    );
    a && b && c
}

fn orderings() -> bool {
    let plan = StudyPlan::read_path(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fig4.study")).unwrap();
    let mut rows: HashMap<(String, u64, Procedure), MetricsRow> = HashMap::new();
    let key = |fam: Family, p: f64, proc: Procedure| (fam.name().to_string(), (p * 100.0).round() as u64, proc);
    for cell in plan.cells() {
        let proc = match cell.design.kind() {
            sensitest::design::DesignKind::UpDown => Procedure::UpDownMle,
            sensitest::design::DesignKind::Bcd => Procedure::BcdCir,
            _ => Procedure::Rmj,
        };
        let tail = (cell.p - 0.1).abs() < 1e-9 || (cell.p - 0.9).abs() < 1e-9;
        if proc == Procedure::UpDownMle && !(cell.model.family == Family::Normal && tail) {
            continue;
        }
        let row = run_study(&cell).unwrap();
        rows.insert(key(cell.model.family, cell.p, proc), row);
    }

    let mut ok_mse = true;
    for p in [0.1, 0.9] {
        let m = |proc| rows[&key(Family::Normal, p, proc)].mse.unwrap();
        let (ud, bcd, rmj) = (m(Procedure::UpDownMle), m(Procedure::BcdCir), m(Procedure::Rmj));
        ok_mse &= check(
            ud > bcd && ud > rmj,
            format!("normal p={p}: MSE up-down {ud:.4} > BCD {bcd:.4}, RMJ {rmj:.4}"),
        );
    }

    let mut ok_cov = true;
    for m in &plan.models {
        let r = &rows[&key(m.family, 0.5, Procedure::BcdCir)];
        let c = r.coverage.unwrap_or(f64::NAN);
        ok_cov &= check(
            (0.86..=0.93).contains(&c),
            format!("BCD coverage, {} p=0.5: {c:.4} in [0.86, 0.93]", m.family.name()),
        );
    }

    let mut wins = 0;
    let mut cells = 0;
    let mut misses = Vec::new();
    for m in &plan.models {
        for &p in &plan.p {
            let w = |proc| rows[&key(m.family, p, proc)].mean_ci_width.unwrap_or(f64::INFINITY);
            cells += 1;
            if w(Procedure::Rmj) < w(Procedure::BcdCir) {
                wins += 1;
            } else {
                misses.push(format!("{} p={p}", m.family.name()));
            }
        }
    }
    let frac = wins as f64 / cells as f64;
    let ok_width = check(
        frac >= 0.8,
        format!("RMJ width < BCD width in {wins}/{cells} cells ({:.0}% >= 80%); misses: {}", 100.0 * frac, misses.join(", ")),
    );
    ok_mse && ok_cov && ok_width
}

fn random_dataset(seed: u64) -> Dataset {
    let mut g = stream_rng(seed, 0);
    let n = 20 + (uniform(&mut g) * 80.0) as usize;
    let d = 0.05 + 0.3 * uniform(&mut g);
    let mut c = UpDownConfig::new(40.0 + 200.0 * uniform(&mut g), d);
    c.n = Some(n);
    let mut st = DesignState::new(DesignConfig::UpDown(c), RngState::default()).unwrap();
    while let Some(next) = st.next.clone() {
        let y = bernoulli(&mut g, ResponseModel::probit_log(THETA0).cdf(next.stimulus));
        st.record(y).unwrap();
    }
    Dataset::new("N", st.history)
}

fn mle_invariants() -> (bool, bool) {
    let nd = Normal::standard();
    let mut worst_rel: f64 = 0.0;
    let mut worst_score: f64 = 0.0;
    let mut worst_info: f64 = 0.0;
    for k in 0..100 {
        let ds = random_dataset(1000 + k);
        let mut g = stream_rng(2000 + k, 0);
        let th = ProbitTheta::new(THETA0.alpha + uniform(&mut g) - 0.5, THETA0.beta * (0.8 + 0.4 * uniform(&mut g)));
        let an = score(&ds, &th);
        for i in 0..2 {
            let h = 1e-6 * if i == 0 { 1.0 + th.alpha.abs() } else { 1.0 + th.beta.abs() };
            let shift = |s: f64| {
                let mut t = th;
                if i == 0 {
                    t.alpha += s;
                } else {
                    t.beta += s;
                }
                log_likelihood(&ds, &t)
            };
            let fd = (shift(h) - shift(-h)) / (2.0 * h);
            worst_rel = worst_rel.max((an[i] - fd).abs() / an[i].abs().max(1e-2));
        }

        let j = fisher_information(&ds, &th);
        let mut bf = [[0.0; 2]; 2];
        for t in &ds.trials {
            let z = [1.0, t.stimulus.ln()];
            let eta = th.alpha + th.beta * z[1];
            let w = nd.pdf(eta).powi(2) / (nd.cdf(eta) * (1.0 - nd.cdf(eta)));
            for r in 0..2 {
                for c in 0..2 {
                    bf[r][c] += w * z[r] * z[c];
                }
            }
        }
        for r in 0..2 {
            for c in 0..2 {
                worst_info = worst_info.max((j[r][c] - bf[r][c]).abs() / bf[r][c].abs().max(1.0));
            }
        }

        if let Ok(fit) = fit_probit_mle(&ds) {
            let s = score(&ds, &fit.theta_hat);
            worst_score = worst_score.max(s[0].abs().max(s[1].abs()));
        }
    }
    let a = check(
        worst_rel < 1e-5 && worst_score < 1e-8,
        format!("MLE gradient vs central differences, 100 datasets: worst relative error {worst_rel:.2e}; worst score at a fit {worst_score:.2e}"),
    );
    let b = check(worst_info <= 1e-10, format!("information matrix vs per-trial outer products: worst {worst_info:.2e}"));
    (a, b)
}

/// Best monotone fit over every partition of the levels into consecutive
/// pooled blocks.
fn oracle(y: &[f64], w: &[f64]) -> Vec<f64> {
    let m = y.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0..(1u32 << (m - 1)) {
        let mut fit = vec![0.0; m];
        let mut start = 0;
        let mut prev = f64::NEG_INFINITY;
        let mut monotone = true;
        for i in 0..m {
            if i == m - 1 || mask & (1 << i) != 0 {
                let (sy, sw) = (start..=i).fold((0.0, 0.0), |(a, b), j| (a + y[j] * w[j], b + w[j]));
                let r = sy / sw;
                if r < prev - 1e-15 {
                    monotone = false;
                }
                prev = r;
                fit[start..=i].iter_mut().for_each(|f| *f = r);
                start = i + 1;
            }
        }
        if monotone {
            let sse: f64 = (0..m).map(|i| w[i] * (y[i] - fit[i]).powi(2)).sum();
            if best.as_ref().is_none_or(|b| sse < b.0 - 1e-14) {
                best = Some((sse, fit));
            }
        }
    }
    best.unwrap().1
}

fn pava_invariant() -> bool {
    // every level carries (trials, positives) with 1 ≤ trials ≤ 3
    let cells: Vec<(usize, usize)> = (1..=3).flat_map(|n| (0..=n).map(move |y| (n, y))).collect();
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for levels in 1..=5u32 {
        for code in 0..cells.len().pow(levels) {
            let mut c = code;
            let mut pairs = Vec::new();
            let (mut ys, mut ws) = (Vec::new(), Vec::new());
            for l in 0..levels as usize {
                let (n, y) = cells[c % cells.len()];
                c /= cells.len();
                for k in 0..n {
                    pairs.push(((l + 1) as f64, u8::from(k < y)));
                }
                ys.push(y as f64 / n as f64);
                ws.push(n as f64);
            }
            let fit = pava(&Dataset::from_pairs("N", &pairs));
            let want = oracle(&ys, &ws);
            for (node, w) in fit.nodes.iter().zip(&want) {
                worst = worst.max((node.rate - w).abs());
            }
            assert_eq!(fit.nodes.len(), want.len());
            checked += 1;
        }
    }
    check(worst < 1e-12, format!("PAVA vs exhaustive oracle on all {checked} datasets (<=5 levels, <=3 trials): worst {worst:.1e}"))
}

fn bcd_median() -> bool {
    let model = ResponseModel::probit_log(THETA0);
    let target = model.quantile(0.25).unwrap().ln();
    let d = 0.05;
    let mut st = DesignState::new(DesignConfig::Bcd(BcdConfig::new(80.0, d, 0.25)), RngState::new(7, 0)).unwrap();
    let mut g = stream_rng(7, 1);
    let mut ts = Vec::with_capacity(100_000);
    for _ in 0..100_000 {
        let t = st.next.as_ref().unwrap().log_stimulus;
        ts.push(t);
        let y = bernoulli(&mut g, model.cdf_design(t));
        st.record(y).unwrap();
        // the history is not needed here
        st.history.clear();
    }
    ts.sort_by(f64::total_cmp);
    let med = ts[ts.len() / 2];
    check(
        (med - target).abs() <= d,
        format!("BCD p=0.25, d={d}, 100000 steps: median log stimulus {med:.4} vs log xi25 {target:.4}"),
    )
}

fn session_replays() -> bool {
    let mut g = stream_rng(99, 0);
    let mut mismatches = 0;
    for k in 0..1000u64 {
        let pick = uniform(&mut g);
        let n = 5 + (uniform(&mut g) * 40.0) as usize;
        let cfg = if pick < 0.25 {
            let mut c = BcdConfig::new(80.0, 0.05 + 0.4 * uniform(&mut g), 0.05 + 0.9 * uniform(&mut g));
            c.n = Some(n);
            DesignConfig::Bcd(c)
        } else if pick < 0.5 {
            let mut c = UpDownConfig::new(80.0, 0.1 + 0.3 * uniform(&mut g));
            c.grid = Some(builtin_grid("all-intermediate").unwrap());
            c.n = Some(n);
            DesignConfig::UpDown(c)
        } else if pick < 0.75 {
            DesignConfig::Rmj(RmjConfig::new(80.0, 0.1 + 0.8 * uniform(&mut g), n))
        } else {
            DesignConfig::Un(UnStaircaseConfig::preset(UnVariant::F1, notch6_grid(), None).unwrap())
        };
        let mut s = Session::create(format!("s{k}"), SessionSpec::new(cfg, "m", "N"), RngState::new(k, k), Utc::now()).unwrap();
        while let Some(next) = s.state.next.clone() {
            let y = bernoulli(&mut g, 0.5);
            let mut req = OutcomeRequest::new(y, s.seq());
            if s.state.kind() != sensitest::design::DesignKind::Un && uniform(&mut g) < 0.1 {
                req.stimulus = Some(next.stimulus * (0.8 + 0.4 * uniform(&mut g)));
            }
            let e = s.outcome_entry(&req, Utc::now()).unwrap();
            s.apply(e).unwrap();
        }
        let (entries, _) = parse_log(&log_to_jsonl(&s.log).unwrap()).unwrap();
        let back = Session::from_log(&entries).unwrap();
        if back != s || back.view() != s.view() {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("event-log replay of 1000 random sessions: {mismatches} mismatches"))
}

fn invariants() -> bool {
    let (grad, info) = mle_invariants();
    let pav = pava_invariant();
    let med = bcd_median();
    let ses = session_replays();
    grad && info && pav && med && ses
}

fn main() {
    let mut rep = Report { failures: 0 };
    let criteria: [(&str, fn() -> bool); 6] = [
        ("PETN staircase replays: 80 N insensitive and 48 N sensitive", petn_staircases),
        ("PETN CIR estimates at p=0.10, level 0.90", petn_cir),
        ("grid-interpretation study: F1 type I, K=6, threshold 80 N", grid_study),
        ("chi-square(1) convergence of log W", chi2),
        ("simulation-study orderings at n=30, S=10000", orderings),
        ("invariant suites", invariants),
    ];
    for (name, f) in criteria {
        let t = Instant::now();
        let ok = f();
        rep.line(name, ok, t.elapsed().as_secs_f64());
    }
    println!("{} of 6 primary criteria failed", rep.failures);
    if rep.failures > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
