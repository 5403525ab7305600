//! The `sensitest` command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
//! 3 statistical failure (undefined MLE, inversion outside the fitted range).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{self, Dataset};
use crate::design::{
    Classification, DesignConfig, DesignState, LimitingStimulusResult, LimitingType, RmjConfig, UnStaircaseConfig,
    UnVariant,
};
use crate::error::{Error, Result};
use crate::estimate::{cir_quantile, fieller_ci, fit_probit_mle, rmj_estimate, IntervalShape, Method, QuantileEstimate, XScale};
use crate::grid::builtin_grid;
use crate::model::{ProbitTheta, ResponseModel};
use crate::rng::RngState;
use crate::service::ServiceConfig;
use crate::session::{OutcomeRequest, SessionSpec, SessionStore};
use crate::sim::{self, ExportFormat, Procedure, StudyPlan};

pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_STATISTICAL: i32 = 3;

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_statistical() {
        EXIT_STATISTICAL
    } else if matches!(e, Error::Io { .. } | Error::Responder(_)) {
        EXIT_IO
    } else {
        EXIT_USAGE
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sensitest",
    version,
    about = "Sequential sensitivity testing: staircases, up-and-down, biased coin and Robbins-Monro-Joseph designs",
    term_width = 100
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte Carlo study plan and write CSV and JSON metrics
    Simulate(SimulateArgs),
    /// Compare the limiting-stimulus distribution of a staircase on two grids
    CompareGrids(CompareGridsArgs),
    /// Sample log W under up-and-down and compare it with log chi-square(1)
    Logw(LogwArgs),
    /// Estimate a quantile with a confidence interval from a dataset
    Estimate(EstimateArgs),
    /// Replay a recorded dataset through a procedure
    Replay(ReplayArgs),
    /// Run the session service over HTTP
    Serve(ServeArgs),
    /// Work with stored sessions directly, without the service
    Session(SessionArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputMode {
    Text,
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Natural,
    Log,
}

impl From<AxisArg> for XScale {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Natural => XScale::Natural,
            AxisArg::Log => XScale::Log,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Study plan (TOML), e.g. configs/fig4.study
    pub config: PathBuf,
    /// Replicates per cell (overrides S)
    #[arg(long = "S", value_name = "S")]
    pub replicates: Option<usize>,
    /// Master seed (overrides master_seed)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Confidence level (overrides level)
    #[arg(long)]
    pub level: Option<f64>,
    /// Trials per replicate; repeat for several (overrides n)
    #[arg(long = "n", value_name = "N")]
    pub n: Vec<usize>,
    /// Target probabilities; repeat for several (overrides p)
    #[arg(long = "p", value_name = "P")]
    pub p: Vec<f64>,
    /// Procedures: up-down-mle, bcd-cir, rmj; repeat for several
    #[arg(long = "procedure", value_name = "NAME")]
    pub procedures: Vec<Procedure>,
    /// Log-scale step of up-and-down and BCD (overrides d)
    #[arg(long)]
    pub d: Option<f64>,
    /// RMJ prior standard deviation (overrides tau1)
    #[arg(long)]
    pub tau1: Option<f64>,
    /// Output prefix; writes PREFIX.csv and PREFIX.json [default: config file stem]
    #[arg(long, short = 'o', value_name = "PREFIX")]
    pub out: Option<PathBuf>,
    /// Also write per-replicate records, one JSONL file per cell, into DIR
    #[arg(long, value_name = "DIR")]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareGridsArgs {
    /// First grid (builtin name)
    #[arg(long, default_value = "notch6")]
    pub grid_a: String,
    /// Second grid (builtin name)
    #[arg(long, default_value = "all-intermediate")]
    pub grid_b: String,
    /// Staircase procedure: i1, i2, i3, f1, f2
    #[arg(long, default_value = "f1")]
    pub procedure: UnVariant,
    /// Consecutive negatives that end a run (overrides the procedure)
    #[arg(long)]
    pub k: Option<usize>,
    /// Reported value: I (last positive) or II (terminal level)
    #[arg(long)]
    pub limiting_type: Option<LimitingType>,
    /// Start level (required for f2)
    #[arg(long)]
    pub start: Option<f64>,
    /// Classification threshold; values below it are sensitive
    #[arg(long, default_value_t = 80.0)]
    pub threshold: f64,
    /// Probit intercept of the true model
    #[arg(long, allow_negative_numbers = true, default_value_t = ProbitTheta::PETN_REFERENCE.alpha)]
    pub alpha: f64,
    /// Probit slope (per log stimulus) of the true model
    #[arg(long, default_value_t = ProbitTheta::PETN_REFERENCE.beta)]
    pub beta: f64,
    /// Replicates per grid
    #[arg(long = "S", value_name = "S", default_value_t = 100_000)]
    pub replicates: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the full comparison as JSON to FILE
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Output format on stdout
    #[arg(long, value_enum, default_value_t = OutputMode::Text)]
    pub output: OutputMode,
}

#[derive(Debug, Args)]
pub struct LogwArgs {
    /// Probit intercept of the true model
    #[arg(long, allow_negative_numbers = true, default_value_t = ProbitTheta::PETN_REFERENCE.alpha)]
    pub alpha: f64,
    /// Probit slope of the true model
    #[arg(long, default_value_t = ProbitTheta::PETN_REFERENCE.beta)]
    pub beta: f64,
    /// First stimulus
    #[arg(long, default_value_t = 360.0)]
    pub x1: f64,
    /// Log-scale step
    #[arg(long, default_value_t = 0.2)]
    pub d: f64,
    /// Trials per replicate
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Replicates
    #[arg(long = "S", value_name = "S", default_value_t = 10_000)]
    pub replicates: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the log W sample (one value per line, with header) to FILE
    #[arg(long, value_name = "FILE")]
    pub sample_out: Option<PathBuf>,
    /// Output format on stdout
    #[arg(long, value_enum, default_value_t = OutputMode::Text)]
    pub output: OutputMode,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Dataset file or packaged alias (petn_table3 .. petn_table6)
    pub dataset: String,
    /// Estimator: fieller (probit MLE) or cir (centred isotonic regression)
    #[arg(long, default_value = "fieller")]
    pub method: Method,
    /// Target probability
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// Confidence level
    #[arg(long, default_value_t = 0.9)]
    pub level: f64,
    /// Axis on which the isotonic curve is interpolated
    #[arg(long, value_enum, default_value_t = AxisArg::Natural)]
    pub scale: AxisArg,
    /// Output format
    #[arg(long, value_enum, default_value_t = OutputMode::Text)]
    pub output: OutputMode,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Dataset file or packaged alias (petn_table3 .. petn_table6)
    pub dataset: String,
    /// Procedure: a staircase (i1, i2, i3, f1, f2) or up-down, bcd, rmj
    #[arg(long)]
    pub procedure: Option<String>,
    /// Builtin grid for staircase replays
    #[arg(long, default_value = "notch6")]
    pub grid: String,
    /// Staircase start level (required for f2)
    #[arg(long)]
    pub start: Option<f64>,
    /// Staircase classification threshold [default: 80 for f1 and f2]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Estimator for non-staircase replays: fieller, cir, rmj
    #[arg(long)]
    pub estimator: Option<Method>,
    /// Target probability [default: 0.5]
    #[arg(long)]
    pub p: Option<f64>,
    /// Confidence level
    #[arg(long, default_value_t = 0.9)]
    pub level: f64,
    /// Axis on which the isotonic curve is interpolated
    #[arg(long, value_enum, default_value_t = AxisArg::Natural)]
    pub scale: AxisArg,
    /// RMJ prior standard deviation
    #[arg(long, default_value_t = 1.0)]
    pub tau1: f64,
    /// Output format
    #[arg(long, value_enum, default_value_t = OutputMode::Text)]
    pub output: OutputMode,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Session data directory [env: SENSITEST_DATA_DIR, default: sessions]
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Listen address [env: SENSITEST_BIND, default: 127.0.0.1:8080]
    #[arg(long)]
    pub bind: Option<std::net::SocketAddr>,
    /// Master seed of session coin streams [env: SENSITEST_SEED, default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    /// Session data directory [env: SENSITEST_DATA_DIR, default: sessions]
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub action: SessionAction,
}

#[derive(Debug, Subcommand)]
pub enum SessionAction {
    /// Create a session from a JSON spec file ("-" reads stdin)
    Create {
        /// Session spec: {"material", "unit", "level", "config": {"design": ...}}
        spec: PathBuf,
        /// Master seed of the coin stream
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List sessions
    List,
    /// Print a session snapshot as JSON
    Show {
        /// Session id
        id: String,
    },
    /// Record one outcome
    Outcome {
        /// Session id
        id: String,
        /// 1 for an explosion, 0 otherwise
        #[arg(value_parser = clap::value_parser!(u8).range(0..=1))]
        outcome: u8,
        /// Sequence number of the recommendation being answered
        #[arg(long)]
        echo: usize,
        /// Free-text note stored with the trial
        #[arg(long)]
        note: Option<String>,
        /// Stimulus actually used, when it differs from the recommendation
        #[arg(long)]
        stimulus: Option<f64>,
    },
    /// Close a session without a result
    Abandon {
        /// Session id
        id: String,
        /// Reason stored in the log
        #[arg(long)]
        reason: Option<String>,
    },
    /// Export the trials of a session as a dataset
    Export {
        /// Session id
        id: String,
        /// csv or json
        #[arg(long, default_value = "csv")]
        format: ExportFormat,
        /// Write to FILE instead of stdout
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

/// The clap command, for help rendering.
pub fn command() -> clap::Command {
    Cli::command()
}

/// Parse `args` (including the program name) and run, writing to `out`
/// and `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return e.exit_code();
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn print_json<T: Serialize>(out: &mut dyn Write, v: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, v)?;
    writeln!(out).map_err(io_err)
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::config("level", format!("must lie in (0, 1), got {level}")))
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::config("p", format!("must lie in (0, 1), got {p}")))
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(a, out, err),
        Command::CompareGrids(a) => cmd_compare_grids(a, out).map(|_| 0),
        Command::Logw(a) => cmd_logw(a, out).map(|_| 0),
        Command::Estimate(a) => cmd_estimate(a, out).map(|_| 0),
        Command::Replay(a) => cmd_replay(a, out).map(|_| 0),
        Command::Serve(a) => cmd_serve(a).map(|_| 0),
        Command::Session(a) => cmd_session(a, out).map(|_| 0),
    }
}

fn cmd_simulate(a: SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    if !a.config.exists() {
        return Err(Error::config("config", format!("{} does not exist", a.config.display())));
    }
    let mut plan = StudyPlan::read_path(&a.config)?;
    if let Some(s) = a.replicates {
        plan.replicates = s;
    }
    if let Some(s) = a.seed {
        plan.master_seed = s;
    }
    if let Some(l) = a.level {
        check_level(l)?;
        plan.level = l;
    }
    if !a.n.is_empty() {
        plan.n = a.n;
    }
    if !a.p.is_empty() {
        plan.p = a.p;
    }
    if !a.procedures.is_empty() {
        plan.procedures = a.procedures;
    }
    if let Some(d) = a.d {
        plan.d = d;
    }
    if let Some(t) = a.tau1 {
        plan.tau1 = t;
    }
    plan.validate()?;
    for c in plan.cells() {
        c.validate()?;
    }
    let prefix = a.out.unwrap_or_else(|| {
        PathBuf::from(a.config.file_stem().map(|s| s.to_os_string()).unwrap_or_else(|| "study".into()))
    });
    if let Some(dir) = &a.audit {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut rows = Vec::new();
    let mut failures = 0;
    for (i, cfg) in plan.cells().into_iter().enumerate() {
        let res = match &a.audit {
            Some(dir) => sim::run_study_audited(&cfg).and_then(|(row, recs)| {
                sim::write_audit(&dir.join(format!("cell-{:04}.jsonl", i + 1)), &recs)?;
                Ok(row)
            }),
            None => sim::run_study(&cfg),
        };
        match res {
            Ok(row) => rows.push(row),
            Err(e) => {
                failures += 1;
                let _ = writeln!(
                    err,
                    "cell {} ({} {} p={} n={}): {e}",
                    i + 1,
                    cfg.model.family.name(),
                    cfg.estimator.name(),
                    cfg.p,
                    cfg.n
                );
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::config("study", "every cell failed"));
    }
    let csv = prefix.with_extension("csv");
    let json = prefix.with_extension("json");
    sim::export_results(&rows, &csv, ExportFormat::Csv)?;
    sim::export_results(&rows, &json, ExportFormat::Json)?;
    writeln!(out, "{} cells written to {} and {}", rows.len(), csv.display(), json.display()).map_err(io_err)?;
    if failures > 0 {
        let _ = writeln!(err, "{failures} cells failed");
        return Ok(EXIT_IO);
    }
    Ok(0)
}

fn staircase_config(
    variant: UnVariant,
    grid: &str,
    start: Option<f64>,
    k: Option<usize>,
    limiting_type: Option<LimitingType>,
    threshold: Option<f64>,
) -> Result<UnStaircaseConfig> {
    let mut c = UnStaircaseConfig::preset(variant, builtin_grid(grid)?, start)?;
    if let Some(k) = k {
        c.k = k;
    }
    if let Some(t) = limiting_type {
        c.limiting_type = t;
    }
    c.threshold = threshold;
    c.validate()?;
    Ok(c)
}

fn cmd_compare_grids(a: CompareGridsArgs, out: &mut dyn Write) -> Result<()> {
    let theta = ProbitTheta::new(a.alpha, a.beta);
    let model = ResponseModel::probit_log(theta);
    let template = staircase_config(
        a.procedure,
        &a.grid_a,
        a.start,
        a.k,
        a.limiting_type,
        Some(a.threshold),
    )?;
    let cmp = sim::un_grid_comparison(&model, &builtin_grid(&a.grid_a)?, &builtin_grid(&a.grid_b)?, &template, a.replicates, a.seed)?;
    if let Some(path) = &a.out {
        let text = serde_json::to_string_pretty(&cmp)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    if a.output == OutputMode::Structured {
        return print_json(out, &cmp);
    }
    for g in [&cmp.a, &cmp.b] {
        writeln!(out, "grid {}", g.grid).map_err(io_err)?;
        if let Some(r) = g.classification_rate {
            writeln!(out, "  sensitive (< {}): {:.2}%", a.threshold, 100.0 * r).map_err(io_err)?;
        }
        writeln!(out, "  mean trials: {:.3}", g.mean_trials).map_err(io_err)?;
        writeln!(out, "  floor hits: {}", g.floor_hits).map_err(io_err)?;
        for c in &g.distribution {
            let v = c.value.map_or_else(|| "none".to_string(), |v| v.to_string());
            writeln!(out, "  {v:>6}  {:>7}  {:.4}", c.count, c.frequency).map_err(io_err)?;
        }
    }
    Ok(())
}

fn cmd_logw(a: LogwArgs, out: &mut dyn Write) -> Result<()> {
    let st = sim::logw_study(ProbitTheta::new(a.alpha, a.beta), a.x1, a.d, a.n, a.replicates, a.seed)?;
    if let Some(path) = &a.sample_out {
        let mut text = String::from("log_w\n");
        for v in &st.sample {
            text.push_str(&sim::format_sig6(*v));
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    if a.output == OutputMode::Structured {
        return print_json(out, &st);
    }
    writeln!(out, "replicates: {}", st.replicates).map_err(io_err)?;
    writeln!(
        out,
        "undefined MLE: {} ({:.2}%)",
        st.undefined_count,
        100.0 * st.undefined_fraction()
    )
    .map_err(io_err)?;
    writeln!(out, "KS distance to log chi-square(1): {:.4}", st.ks_distance).map_err(io_err)
}

fn describe(q: &QuantileEstimate, unit: &str) -> String {
    let pct = format!("{}%", sim::format_sig6(100.0 * q.level));
    let interval = match q.shape {
        IntervalShape::Bounded => format!("[{:.3}, {:.3}] {unit}", q.ci_low, q.ci_high),
        IntervalShape::HalfLine => format!("[{:.3}, {:.3}] {unit} (unbounded)", q.ci_low, q.ci_high),
        IntervalShape::Complement { gap_low, gap_high } => format!(
            "everything outside ({:.3}, {:.3}) {unit} (unbounded)",
            gap_low.exp(),
            gap_high.exp()
        ),
        IntervalShape::WholeLine => "the whole line (unbounded)".to_string(),
    };
    format!(
        "xi({}) = {:.3} {unit}, {pct} CI {interval} [{}]",
        q.p,
        q.point,
        q.method.name()
    )
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    dataset: &'a str,
    trials: usize,
    unit: &'a str,
    estimate: &'a QuantileEstimate,
}

fn offline_estimate(ds: &Dataset, method: Method, p: f64, level: f64, scale: XScale) -> Result<QuantileEstimate> {
    check_p(p)?;
    check_level(level)?;
    match method {
        Method::FiellerMle => fieller_ci(&fit_probit_mle(ds)?, p, level),
        Method::CirDelta => cir_quantile(ds, p, level, scale),
        Method::Rmj => Err(Error::config(
            "method",
            "RMJ estimates come from the design run; use `replay --procedure rmj`",
        )),
    }
}

fn report_estimate(out: &mut dyn Write, name: &str, ds: &Dataset, q: &QuantileEstimate, mode: OutputMode) -> Result<()> {
    match mode {
        OutputMode::Structured => print_json(
            out,
            &EstimateReport {
                dataset: name,
                trials: ds.len(),
                unit: &ds.unit,
                estimate: q,
            },
        ),
        OutputMode::Text => writeln!(out, "{}", describe(q, &ds.unit)).map_err(io_err),
    }
}

fn cmd_estimate(a: EstimateArgs, out: &mut dyn Write) -> Result<()> {
    check_level(a.level)?;
    let ds = dataset::load(&a.dataset)?;
    let q = offline_estimate(&ds, a.method, a.p, a.level, a.scale.into())?;
    report_estimate(out, &a.dataset, &ds, &q, a.output)
}

/// Feed a staircase the recorded outcomes, checking each stimulus.
/// Also reports whether the run terminated.
pub fn replay_staircase(cfg: &UnStaircaseConfig, ds: &Dataset) -> Result<(LimitingStimulusResult, bool)> {
    let mut st = DesignState::new(DesignConfig::Un(cfg.clone()), RngState::default())?;
    for t in &ds.trials {
        let Some(next) = &st.next else {
            return Err(Error::Dataset(format!(
                "trial {} at {} comes after the staircase terminated",
                t.index, t.stimulus
            )));
        };
        if !crate::grid::same_value(next.stimulus, t.stimulus) {
            return Err(Error::Dataset(format!(
                "trial {}: stimulus {} but the staircase calls for {}",
                t.index, t.stimulus, next.stimulus
            )));
        }
        st.record(t.outcome)?;
    }
    Ok((st.un_result()?, st.is_terminated()))
}

#[derive(Serialize)]
struct StaircaseReport<'a> {
    dataset: &'a str,
    procedure: UnVariant,
    grid: String,
    terminated: bool,
    #[serde(flatten)]
    result: &'a LimitingStimulusResult,
}

fn replay_design(ds: &Dataset, design: DesignConfig) -> Result<DesignState> {
    let mut st = DesignState::new(design, RngState::default())?;
    for t in &ds.trials {
        st.record_at(t.stimulus, t.outcome)?;
    }
    Ok(st)
}

fn cmd_replay(a: ReplayArgs, out: &mut dyn Write) -> Result<()> {
    check_level(a.level)?;
    let ds = dataset::load(&a.dataset)?;
    let proc = a.procedure.as_deref().map(str::to_ascii_lowercase);
    if let Some(Ok(variant)) = proc.as_deref().map(str::parse::<UnVariant>) {
        let threshold = a.threshold.or(match variant {
            UnVariant::F1 | UnVariant::F2 => Some(80.0),
            _ => None,
        });
        let cfg = staircase_config(variant, &a.grid, a.start, None, None, threshold)?;
        let (res, done) = replay_staircase(&cfg, &ds)?;
        if a.output == OutputMode::Structured {
            return print_json(
                out,
                &StaircaseReport {
                    dataset: &a.dataset,
                    procedure: variant,
                    grid: cfg.grid.name.clone().unwrap_or_else(|| a.grid.clone()),
                    terminated: done,
                    result: &res,
                },
            );
        }
        let kind = match res.limiting_type {
            LimitingType::I => "I",
            LimitingType::II => "II",
        };
        let value = res.value.map_or_else(|| "none (no positive observed)".to_string(), |v| format!("{v} {}", ds.unit));
        writeln!(out, "limiting stimulus (type {kind}): {value}").map_err(io_err)?;
        if let (Some(c), Some(t)) = (res.classification, cfg.threshold) {
            let c = match c {
                Classification::Sensitive => "sensitive",
                Classification::Insensitive => "insensitive",
            };
            writeln!(out, "classification: {c} (threshold {t} {})", ds.unit).map_err(io_err)?;
        }
        let status = if done { "terminated" } else { "not terminated" };
        writeln!(out, "trials: {} ({status})", res.trials.len()).map_err(io_err)?;
        if res.floor_hit {
            writeln!(out, "positive at the lowest grid level").map_err(io_err)?;
        }
        return Ok(());
    }

    let procedure = match proc.as_deref() {
        None => None,
        Some(s) => Some(s.parse::<Procedure>().map_err(|_| {
            Error::config("procedure", format!("unknown procedure `{s}`"))
        })?),
    };
    let method = match (a.estimator, procedure) {
        (Some(m), _) => m,
        (None, Some(p)) => p.estimator(),
        (None, None) => {
            return Err(Error::config("estimator", "give --procedure or --estimator"));
        }
    };
    let p = a.p.unwrap_or(0.5);
    check_p(p)?;
    let q = if method == Method::Rmj {
        let first = ds
            .trials
            .first()
            .ok_or_else(|| Error::Dataset("empty dataset".into()))?;
        let mut c = RmjConfig::new(first.stimulus, p, ds.len());
        c.tau1 = a.tau1;
        let st = replay_design(&ds, DesignConfig::Rmj(c))?;
        rmj_estimate(&st, a.level)?
    } else {
        offline_estimate(&ds, method, p, a.level, a.scale.into())?
    };
    report_estimate(out, &a.dataset, &ds, &q, a.output)
}

fn service_config(data_dir: Option<PathBuf>) -> Result<ServiceConfig> {
    let mut c = ServiceConfig::from_env()?;
    if let Some(d) = data_dir {
        c.data_dir = d;
    }
    Ok(c)
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let mut c = service_config(a.data_dir)?;
    if let Some(b) = a.bind {
        c.bind = b;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("<runtime>", e))?;
    rt.block_on(crate::service::serve(c))
}

fn read_spec(path: &Path) -> Result<SessionSpec> {
    let text = if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s).map_err(|e| Error::io("<stdin>", e))?;
        s
    } else {
        std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?
    };
    serde_json::from_str(&text).map_err(|e| Error::config("spec", e.to_string()))
}

fn cmd_session(a: SessionArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = service_config(a.data_dir)?;
    let open = |seed: u64| -> Result<Arc<SessionStore>> { Ok(Arc::new(SessionStore::open(&cfg.data_dir, seed)?)) };
    match a.action {
        SessionAction::Create { spec, seed } => {
            let v = open(seed)?.create(read_spec(&spec)?)?;
            print_json(out, &v)
        }
        SessionAction::List => {
            for s in open(cfg.seed)?.list() {
                writeln!(
                    out,
                    "{}  {}  {:<10}  {:<7}  {:>4} trials  {}",
                    s.id,
                    s.created_at.format("%Y-%m-%d %H:%M:%S"),
                    format!("{:?}", s.status).to_lowercase(),
                    s.design.name(),
                    s.trials,
                    s.material
                )
                .map_err(io_err)?;
            }
            Ok(())
        }
        SessionAction::Show { id } => print_json(out, &open(cfg.seed)?.get(&id)?),
        SessionAction::Outcome {
            id,
            outcome,
            echo,
            note,
            stimulus,
        } => {
            let req = OutcomeRequest {
                outcome,
                echo,
                note,
                stimulus,
            };
            print_json(out, &open(cfg.seed)?.record(&id, &req)?)
        }
        SessionAction::Abandon { id, reason } => print_json(out, &open(cfg.seed)?.abandon(&id, reason)?),
        SessionAction::Export { id, format, out: file } => {
            let text = open(cfg.seed)?.export(&id, format)?;
            match file {
                Some(p) => std::fs::write(&p, text).map_err(|e| Error::io(&p, e)),
                None => out.write_all(text.as_bytes()).map_err(io_err),
            }
        }
    }
}
