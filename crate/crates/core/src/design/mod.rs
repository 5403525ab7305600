//! Sequential design engines.
//!
//! A [`DesignState`] owns a configuration, the trial history and the next
//! recommended stimulus. Advancing it with an outcome appends a trial and
//! recomputes the recommendation; the whole state is reproducible by
//! replaying the outcomes against the same configuration and seed.

mod rmj;
mod un;

pub use rmj::{default_beta_approx, rmj_build_schedule, rmj_step, RmjSchedule};
pub use un::{
    classify, un_simulate, un_staircase_run, Classification, LimitingStimulusResult, LimitingType,
    StartRule, UnMachine, UnPhase, UnStaircaseConfig, UnVariant,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};
use crate::grid::{SnapPolicy, StimulusGrid};
use crate::normal;
use crate::rng::{uniform, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub stimulus: f64,
    pub log_stimulus: f64,
    pub outcome: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_label: Option<String>,
}

impl TrialRecord {
    pub fn new(index: usize, stimulus: f64, outcome: u8, label: Option<&str>) -> Self {
        Self {
            index,
            stimulus,
            log_stimulus: stimulus.ln(),
            outcome,
            grid_label: label.map(str::to_string),
        }
    }
}

/// Whether `d` is a step in log stimulus or in stimulus units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepScale {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpDownConfig {
    pub x1: f64,
    pub d: f64,
    #[serde(default)]
    pub step_scale: StepScale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<StimulusGrid>,
    #[serde(default)]
    pub snap_policy: SnapPolicy,
    /// Planned number of trials; the design terminates once reached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl UpDownConfig {
    pub fn new(x1: f64, d: f64) -> Self {
        Self {
            x1,
            d,
            step_scale: StepScale::Log,
            grid: None,
            snap_policy: SnapPolicy::Nearest,
            n: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcdConfig {
    pub x1: f64,
    pub d: f64,
    pub p: f64,
    #[serde(default)]
    pub step_scale: StepScale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<StimulusGrid>,
    #[serde(default)]
    pub snap_policy: SnapPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl BcdConfig {
    pub fn new(x1: f64, d: f64, p: f64) -> Self {
        Self {
            x1,
            d,
            p,
            step_scale: StepScale::Log,
            grid: None,
            snap_policy: SnapPolicy::Nearest,
            n: None,
        }
    }

    /// Probability of taking the randomized step.
    pub fn coin_probability(&self) -> f64 {
        if self.p <= 0.5 {
            self.p / (1.0 - self.p)
        } else {
            (1.0 - self.p) / self.p
        }
    }
}

fn default_tau1() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmjConfig {
    pub x1: f64,
    pub p: f64,
    pub n: usize,
    #[serde(default = "default_tau1")]
    pub tau1: f64,
    /// Derivative proxy; φ(Φ⁻¹(p)) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_approx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<StimulusGrid>,
    #[serde(default)]
    pub snap_policy: SnapPolicy,
}

impl RmjConfig {
    pub fn new(x1: f64, p: f64, n: usize) -> Self {
        Self {
            x1,
            p,
            n,
            tau1: 1.0,
            beta_approx: None,
            grid: None,
            snap_policy: SnapPolicy::Nearest,
        }
    }

    pub fn beta_approx(&self) -> f64 {
        self.beta_approx.unwrap_or_else(|| default_beta_approx(self.p))
    }

    pub fn schedule(&self) -> Result<RmjSchedule> {
        rmj_build_schedule(self.p, self.tau1, self.beta_approx(), self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    UpDown,
    Bcd,
    Rmj,
    Un,
}

impl DesignKind {
    pub fn name(&self) -> &'static str {
        match self {
            DesignKind::UpDown => "up-down",
            DesignKind::Bcd => "bcd",
            DesignKind::Rmj => "rmj",
            DesignKind::Un => "un",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "kebab-case")]
pub enum DesignConfig {
    UpDown(UpDownConfig),
    Bcd(BcdConfig),
    Rmj(RmjConfig),
    Un(UnStaircaseConfig),
}

fn check_positive(errs: &mut Vec<FieldError>, field: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(FieldError::new(field, format!("must be positive and finite, got {v}")));
    }
}

fn check_p(errs: &mut Vec<FieldError>, p: f64) {
    if !(p > 0.0 && p < 1.0) {
        errs.push(FieldError::new("p", format!("must lie in (0, 1), got {p}")));
    }
}

fn check_x1_grid(errs: &mut Vec<FieldError>, x1: f64, grid: &Option<StimulusGrid>, snap: SnapPolicy) {
    if let Some(g) = grid {
        if x1 > 0.0 {
            if let Err(e) = g.snap(x1, snap) {
                errs.push(FieldError::new("x1", e.to_string()));
            }
        }
    }
}

impl DesignConfig {
    pub fn kind(&self) -> DesignKind {
        match self {
            DesignConfig::UpDown(_) => DesignKind::UpDown,
            DesignConfig::Bcd(_) => DesignKind::Bcd,
            DesignConfig::Rmj(_) => DesignKind::Rmj,
            DesignConfig::Un(_) => DesignKind::Un,
        }
    }

    pub fn grid(&self) -> Option<&StimulusGrid> {
        match self {
            DesignConfig::UpDown(c) => c.grid.as_ref(),
            DesignConfig::Bcd(c) => c.grid.as_ref(),
            DesignConfig::Rmj(c) => c.grid.as_ref(),
            DesignConfig::Un(c) => Some(&c.grid),
        }
    }

    /// Target probability, where the design has one.
    pub fn target(&self) -> Option<f64> {
        match self {
            DesignConfig::UpDown(_) => Some(0.5),
            DesignConfig::Bcd(c) => Some(c.p),
            DesignConfig::Rmj(c) => Some(c.p),
            DesignConfig::Un(_) => None,
        }
    }

    /// Configured first stimulus (the start level for staircases).
    pub fn start_stimulus(&self) -> f64 {
        match self {
            DesignConfig::UpDown(c) => c.x1,
            DesignConfig::Bcd(c) => c.x1,
            DesignConfig::Rmj(c) => c.x1,
            DesignConfig::Un(c) => c.grid.get(c.start_index()),
        }
    }

    pub fn planned_trials(&self) -> Option<usize> {
        match self {
            DesignConfig::UpDown(c) => c.n,
            DesignConfig::Bcd(c) => c.n,
            DesignConfig::Rmj(c) => Some(c.n),
            DesignConfig::Un(_) => None,
        }
    }

    pub fn step_scale(&self) -> StepScale {
        match self {
            DesignConfig::UpDown(c) => c.step_scale,
            DesignConfig::Bcd(c) => c.step_scale,
            _ => StepScale::Log,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        match self {
            DesignConfig::UpDown(c) => {
                check_positive(&mut errs, "x1", c.x1);
                check_positive(&mut errs, "d", c.d);
                check_x1_grid(&mut errs, c.x1, &c.grid, c.snap_policy);
                if c.n == Some(0) {
                    errs.push(FieldError::new("n", "must be at least 1"));
                }
            }
            DesignConfig::Bcd(c) => {
                check_positive(&mut errs, "x1", c.x1);
                check_positive(&mut errs, "d", c.d);
                check_p(&mut errs, c.p);
                check_x1_grid(&mut errs, c.x1, &c.grid, c.snap_policy);
                if c.n == Some(0) {
                    errs.push(FieldError::new("n", "must be at least 1"));
                }
            }
            DesignConfig::Rmj(c) => {
                check_positive(&mut errs, "x1", c.x1);
                check_p(&mut errs, c.p);
                check_positive(&mut errs, "tau1", c.tau1);
                if let Some(b) = c.beta_approx {
                    check_positive(&mut errs, "beta_approx", b);
                }
                if c.n < 1 {
                    errs.push(FieldError::new("n", "must be at least 1"));
                }
                check_x1_grid(&mut errs, c.x1, &c.grid, c.snap_policy);
            }
            DesignConfig::Un(c) => {
                if let Err(Error::Config(mut e)) = c.validate() {
                    errs.append(&mut e);
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// The next stimulus a design asks for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextStimulus {
    pub stimulus: f64,
    pub log_stimulus: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_label: Option<String>,
}

/// Internal position of a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Machine {
    /// Up-and-down and BCD: current stimulus and its log.
    Walk { x: f64, t: f64 },
    /// RMJ: current stimulus, its log, and prior variance τᵢ².
    Rmj { x: f64, t: f64, tau2: f64 },
    Un(UnMachine),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignState {
    pub config: DesignConfig,
    pub history: Vec<TrialRecord>,
    /// `None` once the design has terminated.
    pub next: Option<NextStimulus>,
    pub rng: RngState,
    pub machine: Machine,
}

fn label_of(grid: Option<&StimulusGrid>, x: f64) -> Option<String> {
    grid.and_then(|g| g.label_of(x)).map(str::to_string)
}

impl DesignState {
    /// Start a design. `rng` seeds the coin of a BCD; other designs ignore it.
    pub fn new(config: DesignConfig, rng: RngState) -> Result<Self> {
        config.validate()?;
        let machine = match &config {
            DesignConfig::UpDown(c) => {
                let x = snap_start(c.x1, &c.grid, c.snap_policy)?;
                Machine::Walk { x, t: x.ln() }
            }
            DesignConfig::Bcd(c) => {
                let x = snap_start(c.x1, &c.grid, c.snap_policy)?;
                Machine::Walk { x, t: x.ln() }
            }
            DesignConfig::Rmj(c) => {
                let x = snap_start(c.x1, &c.grid, c.snap_policy)?;
                Machine::Rmj {
                    x,
                    t: x.ln(),
                    tau2: c.tau1 * c.tau1,
                }
            }
            DesignConfig::Un(c) => Machine::Un(UnMachine::start(c)),
        };
        let mut s = Self {
            config,
            history: Vec::new(),
            next: None,
            rng,
            machine,
        };
        s.refresh_next();
        Ok(s)
    }

    /// Start a design whose first stimulus lies on the design axis at `t`
    /// (used by simulations, where `exp(t)` may be far from any grid).
    pub fn new_at(config: DesignConfig, rng: RngState, t: f64) -> Result<Self> {
        let mut s = Self::new(config, rng)?;
        match &mut s.machine {
            Machine::Walk { x, t: cur } | Machine::Rmj { x, t: cur, .. } => {
                *x = t.exp();
                *cur = t;
            }
            Machine::Un(_) => return Err(Error::State("staircases start on their grid".into())),
        }
        s.refresh_next();
        Ok(s)
    }

    pub fn kind(&self) -> DesignKind {
        self.config.kind()
    }

    pub fn is_terminated(&self) -> bool {
        self.next.is_none()
    }

    /// Stimulus on the design axis that would be used next, even after
    /// termination (x_{n+1} for RMJ).
    pub fn current_log_level(&self) -> Option<f64> {
        match &self.machine {
            Machine::Walk { t, .. } | Machine::Rmj { t, .. } => Some(*t),
            Machine::Un(m) => match &self.config {
                DesignConfig::Un(c) => Some(c.grid.get(m.index).ln()),
                _ => None,
            },
        }
    }

    fn refresh_next(&mut self) {
        let planned_done = self
            .config
            .planned_trials()
            .is_some_and(|n| self.history.len() >= n);
        self.next = match (&self.machine, &self.config) {
            (Machine::Un(m), DesignConfig::Un(c)) => (!m.is_done()).then(|| NextStimulus {
                stimulus: c.grid.get(m.index),
                log_stimulus: c.grid.get(m.index).ln(),
                grid_label: c.grid.label(m.index).map(str::to_string),
            }),
            (Machine::Walk { x, t } | Machine::Rmj { x, t, .. }, _) if !planned_done => {
                Some(NextStimulus {
                    stimulus: *x,
                    log_stimulus: *t,
                    grid_label: label_of(self.config.grid(), *x),
                })
            }
            _ => None,
        };
    }

    /// Record the outcome of a trial at the recommended stimulus.
    pub fn record(&mut self, y: u8) -> Result<()> {
        let mut g = self.rng.generator();
        self.advance(None, y, &mut g)?;
        self.rng.capture(&g);
        Ok(())
    }

    /// Record an outcome observed at `stimulus` instead of the
    /// recommendation; the design continues from that stimulus.
    pub fn record_at(&mut self, stimulus: f64, y: u8) -> Result<()> {
        let mut g = self.rng.generator();
        self.advance(Some(stimulus), y, &mut g)?;
        self.rng.capture(&g);
        Ok(())
    }

    /// Like [`record`](Self::record) but draws any randomness from `rng`.
    pub fn record_with<R: Rng + ?Sized>(&mut self, y: u8, rng: &mut R) -> Result<()> {
        self.advance(None, y, rng)
    }

    /// Value-style advance.
    pub fn next_state(mut self, y: u8) -> Result<Self> {
        self.record(y)?;
        Ok(self)
    }

    fn advance<R: Rng + ?Sized>(&mut self, at: Option<f64>, y: u8, rng: &mut R) -> Result<()> {
        if y > 1 {
            return Err(Error::Domain(format!("outcome must be 0 or 1, got {y}")));
        }
        let Some(next) = self.next.clone() else {
            return Err(Error::State("design has terminated".into()));
        };
        let (x, t) = match at {
            None => (next.stimulus, next.log_stimulus),
            Some(x) => {
                if !(x > 0.0 && x.is_finite()) {
                    return Err(Error::Domain(format!("stimulus must be positive, got {x}")));
                }
                (x, x.ln())
            }
        };
        let index = self.history.len() + 1;
        let grid = self.config.grid().cloned();
        match (&mut self.machine, &self.config) {
            (Machine::Un(m), DesignConfig::Un(c)) => {
                if at.is_some() && !crate::grid::same_value(x, next.stimulus) {
                    return Err(Error::State(format!(
                        "staircase expects a trial at {}, got {x}",
                        next.stimulus
                    )));
                }
                m.observe(c, y);
            }
            (Machine::Walk { x: cx, t: cur }, cfg) => {
                let (d, scale, snap, coin) = match cfg {
                    DesignConfig::UpDown(c) => (c.d, c.step_scale, c.snap_policy, None),
                    DesignConfig::Bcd(c) => (c.d, c.step_scale, c.snap_policy, Some(c.p)),
                    _ => unreachable!("walk machine belongs to up-down or BCD"),
                };
                let dir = walk_direction(y, coin, rng);
                (*cx, *cur) = step((x, t), dir, d, scale, grid.as_ref(), snap)?;
            }
            (Machine::Rmj { x: cx, t: cur, tau2 }, DesignConfig::Rmj(c)) => {
                let cq = normal::quantile(c.p);
                let gamma = c.beta_approx() / normal::pdf(cq);
                let (a, b, next_tau2) = rmj_step(cq, gamma, *tau2);
                let nt = t - a * (f64::from(y) - b);
                (*cx, *cur) = match &grid {
                    Some(g) => {
                        let v = g.snap(nt.exp(), c.snap_policy)?;
                        (v, v.ln())
                    }
                    None => (nt.exp(), nt),
                };
                *tau2 = next_tau2;
            }
            _ => return Err(Error::State("design state does not match its configuration".into())),
        }
        let label = match at {
            None => next.grid_label.clone(),
            Some(_) => label_of(grid.as_ref(), x),
        };
        self.history.push(TrialRecord {
            index,
            stimulus: x,
            log_stimulus: t,
            outcome: y,
            grid_label: label,
        });
        self.refresh_next();
        Ok(())
    }

    /// Rebuild a state from its configuration, seed and observed trials.
    pub fn replay(config: DesignConfig, rng: RngState, trials: &[(Option<f64>, u8)]) -> Result<Self> {
        let mut s = Self::new(config, rng)?;
        for &(x, y) in trials {
            match x {
                Some(x) => s.record_at(x, y)?,
                None => s.record(y)?,
            }
        }
        Ok(s)
    }

    /// Result of a staircase run (provisional while still active).
    pub fn un_result(&self) -> Result<LimitingStimulusResult> {
        match (&self.machine, &self.config) {
            (Machine::Un(m), DesignConfig::Un(c)) => {
                Ok(LimitingStimulusResult::from_run(c, m, self.history.clone()))
            }
            _ => Err(Error::State("not a staircase design".into())),
        }
    }

    /// Prior variance τ² of the RMJ recursion after the recorded trials.
    pub fn rmj_tau2(&self) -> Option<f64> {
        match self.machine {
            Machine::Rmj { tau2, .. } => Some(tau2),
            _ => None,
        }
    }
}

fn snap_start(x1: f64, grid: &Option<StimulusGrid>, policy: SnapPolicy) -> Result<f64> {
    match grid {
        Some(g) => g.snap(x1, policy),
        None => Ok(x1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Down,
    Stay,
    Up,
}

/// Step rule. `coin` is the BCD target; `None` is plain up-and-down.
/// BCD always draws exactly one uniform per trial.
fn walk_direction<R: Rng + ?Sized>(y: u8, coin: Option<f64>, rng: &mut R) -> Direction {
    let Some(p) = coin else {
        return if y == 1 { Direction::Down } else { Direction::Up };
    };
    let heads = if p <= 0.5 {
        uniform(rng) < p / (1.0 - p)
    } else {
        uniform(rng) < (1.0 - p) / p
    };
    match (y, p <= 0.5) {
        (1, true) => Direction::Down,
        (0, true) => {
            if heads {
                Direction::Up
            } else {
                Direction::Stay
            }
        }
        (1, false) => {
            if heads {
                Direction::Down
            } else {
                Direction::Stay
            }
        }
        _ => Direction::Up,
    }
}

/// One walk step from `(x, log x)`.
fn step(
    (x, t): (f64, f64),
    dir: Direction,
    d: f64,
    scale: StepScale,
    grid: Option<&StimulusGrid>,
    snap: SnapPolicy,
) -> Result<(f64, f64)> {
    let sign = match dir {
        Direction::Down => -1.0,
        Direction::Stay => return Ok((x, t)),
        Direction::Up => 1.0,
    };
    let proposal = match scale {
        StepScale::Log => {
            let nt = t + sign * d;
            if grid.is_none() {
                return Ok((nt.exp(), nt));
            }
            nt.exp()
        }
        StepScale::Linear => {
            let nx = x + sign * d;
            if nx <= 0.0 {
                // a linear step below zero stays put
                return Ok((x, t));
            }
            nx
        }
    };
    let v = match grid {
        Some(g) => g.snap(proposal, snap)?,
        None => proposal,
    };
    Ok((v, v.ln()))
}

/// Equivalent to `state.next_state(y)` for an up-and-down design.
pub fn up_down_next(state: DesignState, y: u8) -> Result<DesignState> {
    if state.kind() != DesignKind::UpDown {
        return Err(Error::State("not an up-and-down design".into()));
    }
    state.next_state(y)
}

pub fn bcd_next<R: Rng + ?Sized>(mut state: DesignState, y: u8, rng: &mut R) -> Result<DesignState> {
    if state.kind() != DesignKind::Bcd {
        return Err(Error::State("not a biased coin design".into()));
    }
    state.record_with(y, rng)?;
    Ok(state)
}

pub fn rmj_next(state: DesignState, y: u8) -> Result<DesignState> {
    if state.kind() != DesignKind::Rmj {
        return Err(Error::State("not an RMJ design".into()));
    }
    state.next_state(y)
}
