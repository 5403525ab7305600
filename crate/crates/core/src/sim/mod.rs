//! Monte Carlo studies of the sequential designs.
//!
//! Every replicate draws from its own ChaCha stream `(master_seed, r)`, so
//! any single replicate can be rerun in isolation and aggregates do not
//! depend on the order in which replicates were evaluated.

mod export;
mod logw;
mod staircase;

pub use export::{
    export_results, format_sig6, read_audit, read_results_csv, read_results_json, write_audit, ExportFormat,
    FlatMetrics,
};
pub use logw::{ks_distance_log_chi2, logw_study, LogWStudy};
pub use staircase::{un_grid_comparison, GridComparison, GridSummary, LimitingCount};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::design::{BcdConfig, DesignConfig, DesignKind, DesignState, RmjConfig, UpDownConfig};
use crate::error::{Error, FieldError, Result};
use crate::estimate::{
    cir_quantile, fieller_ci, fit_probit_mle, rmj_estimate, Method, QuantileEstimate, XScale,
};
use crate::model::{Family, ResponseModel};
use crate::rng::{bernoulli, standard_normal, stream_rng, RngState};

/// Where a simulated run puts its first trial, on the design axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum SimStart {
    /// At the target quantile of the true model.
    Quantile,
    /// At the design's configured `x1`.
    Design,
    /// Drawn from N(mean, sd²).
    Normal { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub model: ResponseModel,
    pub design: DesignConfig,
    pub estimator: Method,
    pub p: f64,
    pub n: usize,
    #[serde(rename = "S")]
    pub replicates: usize,
    pub level: f64,
    pub master_seed: u64,
    /// Defaults: the target quantile for up-and-down and BCD, a normal
    /// draw around the model location with sd τ₁ for RMJ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<SimStart>,
}

/// The design/estimator pairings compared in the method study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Procedure {
    UpDownMle,
    BcdCir,
    Rmj,
}

impl Procedure {
    pub const ALL: [Procedure; 3] = [Procedure::UpDownMle, Procedure::BcdCir, Procedure::Rmj];

    pub fn name(&self) -> &'static str {
        match self {
            Procedure::UpDownMle => "up-down-mle",
            Procedure::BcdCir => "bcd-cir",
            Procedure::Rmj => "rmj",
        }
    }

    pub fn estimator(&self) -> Method {
        match self {
            Procedure::UpDownMle => Method::FiellerMle,
            Procedure::BcdCir => Method::CirDelta,
            Procedure::Rmj => Method::Rmj,
        }
    }

    /// Design for a simulated run. The `x1` placeholder is replaced by the
    /// study's start rule.
    pub fn design(&self, p: f64, n: usize, d: f64, tau1: f64) -> DesignConfig {
        match self {
            Procedure::UpDownMle => {
                let mut c = UpDownConfig::new(1.0, d);
                c.n = Some(n);
                DesignConfig::UpDown(c)
            }
            Procedure::BcdCir => {
                let mut c = BcdConfig::new(1.0, d, p);
                c.n = Some(n);
                DesignConfig::Bcd(c)
            }
            Procedure::Rmj => {
                let mut c = RmjConfig::new(1.0, p, n);
                c.tau1 = tau1;
                DesignConfig::Rmj(c)
            }
        }
    }
}

impl std::str::FromStr for Procedure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up-down-mle" | "up-down" => Ok(Procedure::UpDownMle),
            "bcd-cir" | "bcd" => Ok(Procedure::BcdCir),
            "rmj" => Ok(Procedure::Rmj),
            other => Err(Error::config("procedures", format!("unknown procedure `{other}`"))),
        }
    }
}

impl StudyConfig {
    pub fn for_procedure(model: ResponseModel, procedure: Procedure, p: f64, n: usize, replicates: usize) -> Self {
        Self {
            model,
            design: procedure.design(p, n, 0.5, 1.0),
            estimator: procedure.estimator(),
            p,
            n,
            replicates,
            level: 0.9,
            master_seed: 0,
            start: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.replicates < 1 {
            errs.push(FieldError::new("S", "at least one replicate is required"));
        }
        if self.n < 1 {
            errs.push(FieldError::new("n", "at least one trial is required"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            errs.push(FieldError::new("level", "must lie in (0, 1)"));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            errs.push(FieldError::new("p", "must lie in (0, 1)"));
        }
        if let Err(Error::Config(mut e)) = self.model.validate() {
            errs.append(&mut e);
        }
        if let Err(Error::Config(mut e)) = self.design.validate() {
            errs.append(&mut e);
        }
        if let (Some(t), DesignKind::Bcd | DesignKind::Rmj) = (self.design.target(), self.design.kind()) {
            if (t - self.p).abs() > 1e-12 {
                errs.push(FieldError::new("design.p", format!("design targets {t} but the study targets {}", self.p)));
            }
        }
        match (self.design.kind(), self.estimator) {
            (DesignKind::Un, _) => errs.push(FieldError::new(
                "design",
                "staircases have no quantile estimator; use the grid comparison study",
            )),
            (k, Method::Rmj) if k != DesignKind::Rmj => {
                errs.push(FieldError::new("estimator", "the RMJ estimate needs an RMJ design"))
            }
            _ => {}
        }
        if let DesignConfig::Rmj(c) = &self.design {
            if c.n != self.n {
                errs.push(FieldError::new("design.n", "RMJ schedule length must equal n"));
            }
        }
        if let Some(SimStart::Normal { sd, .. }) = self.start {
            if !(sd >= 0.0 && sd.is_finite()) {
                errs.push(FieldError::new("start.sd", "must be finite and nonnegative"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn start_rule(&self) -> SimStart {
        self.start.unwrap_or(match &self.design {
            DesignConfig::Rmj(c) => SimStart::Normal {
                mean: self.model.location,
                sd: c.tau1,
            },
            _ => SimStart::Quantile,
        })
    }

    /// Design with its planned length pinned to `n`.
    fn sim_design(&self) -> DesignConfig {
        let mut d = self.design.clone();
        match &mut d {
            DesignConfig::UpDown(c) => c.n = Some(self.n),
            DesignConfig::Bcd(c) => c.n = Some(self.n),
            _ => {}
        }
        d
    }
}

/// Outcome of one simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<QuantileEstimate>,
    /// Why no estimate exists (undefined MLE, out-of-range inversion, …).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub config: StudyConfig,
    /// log ξ₁₀₀ₚ of the true model (design axis).
    pub true_log_quantile: f64,
    /// Mean squared error of the log-scale point estimates.
    pub mse: Option<f64>,
    /// Same on the stimulus scale.
    pub mse_natural: Option<f64>,
    pub bias: Option<f64>,
    /// Mean log-scale width over defined replicates with bounded intervals.
    pub mean_ci_width: Option<f64>,
    pub coverage: Option<f64>,
    pub defined: usize,
    pub undefined_count: usize,
    /// Defined replicates whose confidence set was unbounded.
    pub unbounded_count: usize,
    pub mean_trials: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification_rate: Option<f64>,
}

fn estimate_replicate(cfg: &StudyConfig, state: &DesignState) -> Result<QuantileEstimate> {
    match cfg.estimator {
        Method::Rmj => rmj_estimate(state, cfg.level),
        m => {
            let data = Dataset::new("", state.history.clone());
            match m {
                Method::FiellerMle => fieller_ci(&fit_probit_mle(&data)?, cfg.p, cfg.level),
                _ => cir_quantile(&data, cfg.p, cfg.level, XScale::Log),
            }
        }
    }
}

/// Simulated experiment of replicate `r`, before estimation.
pub fn simulate_run(cfg: &StudyConfig, r: usize) -> Result<DesignState> {
    let mut rng = stream_rng(cfg.master_seed, r as u64);
    let t1 = match cfg.start_rule() {
        SimStart::Quantile => cfg.model.quantile_design(cfg.p)?,
        SimStart::Design => cfg.design.start_stimulus().ln(),
        SimStart::Normal { mean, sd } => mean + sd * standard_normal(&mut rng),
    };
    let mut state = DesignState::new_at(cfg.sim_design(), RngState::default(), t1)?;
    for _ in 0..cfg.n {
        let Some(next) = &state.next else { break };
        let y = bernoulli(&mut rng, cfg.model.cdf_design(next.log_stimulus));
        state.record_with(y, &mut rng)?;
    }
    Ok(state)
}

/// Run replicate `r` of a study.
pub fn simulate_replicate(cfg: &StudyConfig, r: usize) -> Result<ReplicateRecord> {
    let state = simulate_run(cfg, r)?;
    let (estimate, error) = match estimate_replicate(cfg, &state) {
        Ok(q) => (Some(q), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ReplicateRecord {
        replicate: r,
        trials: state.history.len(),
        estimate,
        error,
    })
}

/// All replicates of a study, in replicate order.
pub fn run_replicates(cfg: &StudyConfig) -> Result<Vec<ReplicateRecord>> {
    cfg.validate()?;
    (0..cfg.replicates)
        .into_par_iter()
        .map(|r| simulate_replicate(cfg, r))
        .collect()
}

/// Aggregate per-replicate records into study metrics. Records are
/// reduced in replicate order whatever order they arrive in.
pub fn aggregate(cfg: &StudyConfig, records: &[ReplicateRecord]) -> Result<MetricsRow> {
    let truth = cfg.model.quantile_design(cfg.p)?;
    let mut recs: Vec<&ReplicateRecord> = records.iter().collect();
    recs.sort_by_key(|r| r.replicate);
    let (mut se, mut se_nat, mut err_sum, mut width, mut covered) = (0.0, 0.0, 0.0, 0.0, 0usize);
    let (mut defined, mut bounded, mut trials) = (0usize, 0usize, 0usize);
    for r in &recs {
        trials += r.trials;
        let Some(q) = &r.estimate else { continue };
        defined += 1;
        let e = q.log_point - truth;
        se += e * e;
        se_nat += (q.log_point.exp() - truth.exp()).powi(2);
        err_sum += e;
        if q.is_bounded() {
            bounded += 1;
            width += q.log_width();
        }
        if q.covers_log(truth) {
            covered += 1;
        }
    }
    let mean = |s: f64, k: usize| (k > 0).then(|| s / k as f64);
    Ok(MetricsRow {
        config: cfg.clone(),
        true_log_quantile: truth,
        mse: mean(se, defined),
        mse_natural: mean(se_nat, defined),
        bias: mean(err_sum, defined),
        mean_ci_width: mean(width, bounded),
        coverage: mean(covered as f64, defined),
        defined,
        undefined_count: recs.len() - defined,
        unbounded_count: defined - bounded,
        mean_trials: trials as f64 / recs.len().max(1) as f64,
        classification_rate: None,
    })
}

pub fn run_study(cfg: &StudyConfig) -> Result<MetricsRow> {
    let recs = run_replicates(cfg)?;
    aggregate(cfg, &recs)
}

/// Study plus the per-replicate records it was computed from.
pub fn run_study_audited(cfg: &StudyConfig) -> Result<(MetricsRow, Vec<ReplicateRecord>)> {
    let recs = run_replicates(cfg)?;
    Ok((aggregate(cfg, &recs)?, recs))
}

/// A model entry of a study plan; omitted fields take the standard form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanModel {
    pub family: Family,
    #[serde(default)]
    pub location: Option<f64>,
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default)]
    pub shape: Option<f64>,
}

impl PlanModel {
    pub fn to_model(&self) -> ResponseModel {
        let mut m = ResponseModel::standard(self.family);
        if let Some(v) = self.location {
            m.location = v;
        }
        if let Some(v) = self.scale {
            m.scale = v;
        }
        if let Some(v) = self.shape {
            m.shape = v;
        }
        m
    }
}

fn default_level() -> f64 {
    0.9
}

fn default_d() -> f64 {
    0.5
}

fn default_tau1() -> f64 {
    1.0
}

fn default_procedures() -> Vec<Procedure> {
    Procedure::ALL.to_vec()
}

/// A grid of study cells read from a `.study` file (TOML).
///
/// ```toml
/// master_seed = 1
/// S = 10000
/// n = [30]
/// p = [0.1, 0.5, 0.9]
///
/// [[models]]
/// family = "normal"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyPlan {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub master_seed: u64,
    #[serde(rename = "S")]
    pub replicates: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    pub n: Vec<usize>,
    pub p: Vec<f64>,
    #[serde(default = "default_procedures")]
    pub procedures: Vec<Procedure>,
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(default = "default_tau1")]
    pub tau1: f64,
    pub models: Vec<PlanModel>,
}

impl StudyPlan {
    pub fn parse(text: &str) -> Result<Self> {
        let plan: StudyPlan =
            toml::from_str(text).map_err(|e| Error::config("study", e.message().to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (field, empty) in [
            ("n", self.n.is_empty()),
            ("p", self.p.is_empty()),
            ("procedures", self.procedures.is_empty()),
            ("models", self.models.is_empty()),
        ] {
            if empty {
                errs.push(FieldError::new(field, "must not be empty"));
            }
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            errs.push(FieldError::new("d", "must be positive"));
        }
        if !(self.tau1 > 0.0 && self.tau1.is_finite()) {
            errs.push(FieldError::new("tau1", "must be positive"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Cells in (n, model, p, procedure) order.
    pub fn cells(&self) -> Vec<StudyConfig> {
        let mut out = Vec::new();
        for &n in &self.n {
            for m in &self.models {
                for &p in &self.p {
                    for proc in &self.procedures {
                        out.push(StudyConfig {
                            model: m.to_model(),
                            design: proc.design(p, n, self.d, self.tau1),
                            estimator: proc.estimator(),
                            p,
                            n,
                            replicates: self.replicates,
                            level: self.level,
                            master_seed: self.master_seed,
                            start: None,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Run every cell of a plan; a failing cell does not stop the others.
pub fn run_plan(plan: &StudyPlan) -> Vec<(StudyConfig, Result<MetricsRow>)> {
    plan.cells()
        .into_iter()
        .map(|c| {
            let r = run_study(&c);
            (c, r)
        })
        .collect()
}
