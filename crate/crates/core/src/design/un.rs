//! The UN limiting-stimulus staircase family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};
use crate::grid::StimulusGrid;

use super::TrialRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LimitingType {
    I,
    II,
}

impl std::str::FromStr for LimitingType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "i" | "1" => Ok(LimitingType::I),
            "II" | "ii" | "2" => Ok(LimitingType::II),
            other => Err(Error::config("limiting_type", format!("expected I or II, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartRule {
    GridMax,
    MidRange,
    Explicit(f64),
}

/// Named procedures from the UN manual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnVariant {
    I1,
    I2,
    I3,
    F1,
    F2,
}

impl std::str::FromStr for UnVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i1" => Ok(UnVariant::I1),
            "i2" => Ok(UnVariant::I2),
            "i3" => Ok(UnVariant::I3),
            "f1" => Ok(UnVariant::F1),
            "f2" => Ok(UnVariant::F2),
            other => Err(Error::config("procedure", format!("unknown UN procedure `{other}`"))),
        }
    }
}

impl UnVariant {
    /// (K, limiting type, initial stage)
    pub fn parameters(&self) -> (usize, LimitingType, bool) {
        match self {
            UnVariant::I1 => (6, LimitingType::I, true),
            UnVariant::I2 => (3, LimitingType::II, false),
            UnVariant::I3 => (25, LimitingType::II, true),
            UnVariant::F1 => (6, LimitingType::I, false),
            UnVariant::F2 => (25, LimitingType::II, false),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Sensitive,
    Insensitive,
}

/// Sensitive iff `value < threshold`.
pub fn classify(value: f64, threshold: f64) -> Classification {
    if value < threshold {
        Classification::Sensitive
    } else {
        Classification::Insensitive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnStaircaseConfig {
    pub grid: StimulusGrid,
    pub k: usize,
    pub limiting_type: LimitingType,
    pub initial_stage: bool,
    pub start: StartRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl UnStaircaseConfig {
    /// Configuration of a named procedure on `grid`. F2 has no defined
    /// start and requires `start`.
    pub fn preset(variant: UnVariant, grid: StimulusGrid, start: Option<f64>) -> Result<Self> {
        let (k, limiting_type, initial_stage) = variant.parameters();
        let start = match (variant, start) {
            (_, Some(v)) => StartRule::Explicit(v),
            (UnVariant::F2, None) => {
                return Err(Error::config("start", "F2 does not define a start level; supply one"))
            }
            (_, None) if initial_stage => StartRule::MidRange,
            (_, None) => StartRule::GridMax,
        };
        let cfg = Self {
            grid,
            k,
            limiting_type,
            initial_stage,
            start,
            threshold: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.k < 1 {
            errs.push(FieldError::new("k", "must be at least 1"));
        }
        if let StartRule::Explicit(v) = self.start {
            if !self.grid.contains(v) {
                errs.push(FieldError::new("start", format!("{v} is not a grid level")));
            }
        }
        if let Some(t) = self.threshold {
            if !t.is_finite() {
                errs.push(FieldError::new("threshold", "must be finite"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn start_index(&self) -> usize {
        match self.start {
            StartRule::GridMax => self.grid.len() - 1,
            StartRule::MidRange => self.grid.mid_index(),
            StartRule::Explicit(v) => self.grid.index_of(v).expect("validated start"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnPhase {
    Initial,
    Descent,
    Done,
}

/// Position of a staircase run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnMachine {
    pub index: usize,
    pub phase: UnPhase,
    /// Consecutive negatives at the current level.
    pub negatives: usize,
    pub last_positive: Option<usize>,
    pub floor_hit: bool,
}

impl UnMachine {
    pub fn start(cfg: &UnStaircaseConfig) -> Self {
        Self {
            index: cfg.start_index(),
            phase: if cfg.initial_stage {
                UnPhase::Initial
            } else {
                UnPhase::Descent
            },
            negatives: 0,
            last_positive: None,
            floor_hit: false,
        }
    }

    pub fn is_done(&self) -> bool {
        self.phase == UnPhase::Done
    }

    pub fn observe(&mut self, cfg: &UnStaircaseConfig, y: u8) {
        let top = cfg.grid.len() - 1;
        match (self.phase, y) {
            (UnPhase::Done, _) => {}
            (_, 1) => {
                self.last_positive = Some(self.index);
                self.negatives = 0;
                self.phase = UnPhase::Descent;
                if self.index == 0 {
                    self.floor_hit = true;
                    self.phase = UnPhase::Done;
                } else {
                    self.index -= 1;
                }
            }
            (UnPhase::Initial, _) => {
                if self.index < top {
                    self.index += 1;
                } else {
                    // no positive anywhere below: the top level starts counting
                    self.phase = UnPhase::Descent;
                    self.negatives = 1;
                    if self.negatives >= cfg.k {
                        self.phase = UnPhase::Done;
                    }
                }
            }
            (UnPhase::Descent, _) => {
                self.negatives += 1;
                if self.negatives >= cfg.k {
                    self.phase = UnPhase::Done;
                }
            }
        }
    }

    /// Type I value so far: the last level with a positive.
    pub fn type_i(&self, grid: &StimulusGrid) -> Option<f64> {
        if self.floor_hit {
            return Some(grid.min());
        }
        self.last_positive.map(|i| grid.get(i))
    }

    /// Type II value so far: the current (or terminating) level.
    pub fn type_ii(&self, grid: &StimulusGrid) -> f64 {
        if self.floor_hit {
            grid.min()
        } else {
            grid.get(self.index)
        }
    }

    pub fn value(&self, cfg: &UnStaircaseConfig) -> Option<f64> {
        match cfg.limiting_type {
            LimitingType::I => self.type_i(&cfg.grid),
            LimitingType::II => Some(self.type_ii(&cfg.grid)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitingStimulusResult {
    pub value: Option<f64>,
    pub limiting_type: LimitingType,
    pub trials: Vec<TrialRecord>,
    pub classification: Option<Classification>,
    pub floor_hit: bool,
}

impl LimitingStimulusResult {
    pub(crate) fn from_run(cfg: &UnStaircaseConfig, m: &UnMachine, trials: Vec<TrialRecord>) -> Self {
        let value = m.value(cfg);
        Self {
            value,
            limiting_type: cfg.limiting_type,
            classification: match (value, cfg.threshold) {
                (Some(v), Some(t)) => Some(classify(v, t)),
                _ => None,
            },
            floor_hit: m.floor_hit,
            trials,
        }
    }
}

/// Run a staircase to termination against `responder`, which returns the
/// outcome of a trial at the given stimulus.
pub fn un_staircase_run<F>(cfg: &UnStaircaseConfig, mut responder: F) -> Result<LimitingStimulusResult>
where
    F: FnMut(f64) -> Result<u8>,
{
    cfg.validate()?;
    let mut m = UnMachine::start(cfg);
    let mut trials = Vec::new();
    while !m.is_done() {
        let x = cfg.grid.get(m.index);
        let y = responder(x)?;
        if y > 1 {
            return Err(Error::Responder(format!("outcome must be 0 or 1, got {y}")));
        }
        trials.push(TrialRecord::new(trials.len() + 1, x, y, cfg.grid.label(m.index)));
        m.observe(cfg, y);
    }
    Ok(LimitingStimulusResult::from_run(cfg, &m, trials))
}

/// Fast path for simulation: (limiting value, trial count, floor hit).
pub fn un_simulate<F>(cfg: &UnStaircaseConfig, mut outcome: F) -> (Option<f64>, usize, bool)
where
    F: FnMut(usize) -> u8,
{
    let mut m = UnMachine::start(cfg);
    let mut n = 0;
    while !m.is_done() {
        let y = outcome(m.index);
        n += 1;
        m.observe(cfg, y);
    }
    (m.value(cfg), n, m.floor_hit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{all_intermediate_grid, notch6_grid};
    use proptest::prelude::*;

    fn scripted(seq: Vec<(f64, u8)>) -> impl FnMut(f64) -> Result<u8> {
        let mut it = seq.into_iter();
        move |x| {
            let (sx, y) = it
                .next()
                .ok_or_else(|| Error::Responder("script exhausted".into()))?;
            assert_eq!(sx, x, "staircase visited an unexpected level");
            Ok(y)
        }
    }

    fn expand(levels: &[(f64, &str)]) -> Vec<(f64, u8)> {
        levels
            .iter()
            .flat_map(|(x, ys)| ys.bytes().map(move |b| (*x, b - b'0')))
            .collect()
    }

    #[test]
    fn petn_notch6_replay() {
        let cfg = UnStaircaseConfig::preset(UnVariant::F1, notch6_grid(), None)
            .unwrap()
            .with_threshold(80.0);
        let seq = expand(&[
            (360.0, "1"),
            (240.0, "1"),
            (160.0, "1"),
            (120.0, "1"),
            (80.0, "01"),
            (60.0, "000000"),
        ]);
        let r = un_staircase_run(&cfg, scripted(seq)).unwrap();
        assert_eq!(r.value, Some(80.0));
        assert_eq!(r.classification, Some(Classification::Insensitive));
        assert_eq!(r.trials.len(), 12);
        assert_eq!(r.trials[0].grid_label.as_deref(), Some("B9/6"));
    }

    #[test]
    fn petn_all_intermediate_replay() {
        let cfg = UnStaircaseConfig::preset(UnVariant::F1, all_intermediate_grid(), None)
            .unwrap()
            .with_threshold(80.0);
        let mut levels: Vec<(f64, &str)> = [
            360.0, 324.0, 288.0, 252.0, 240.0, 216.0, 192.0, 180.0, 168.0, 160.0, 144.0, 128.0,
            120.0, 112.0, 108.0, 96.0, 84.0, 80.0, 72.0, 64.0,
        ]
        .iter()
        .map(|&x| (x, "1"))
        .collect();
        levels.extend([(60.0, "01"), (56.0, "1"), (54.0, "001"), (48.0, "00001"), (42.0, "000000")]);
        let r = un_staircase_run(&cfg, scripted(expand(&levels))).unwrap();
        assert_eq!(r.value, Some(48.0));
        assert_eq!(r.classification, Some(Classification::Sensitive));
        assert_eq!(r.trials.len(), 37);
    }

    #[test]
    fn always_negative_responder() {
        let g = notch6_grid();
        let cfg = UnStaircaseConfig::preset(UnVariant::I2, g.clone(), None).unwrap();
        let r = un_staircase_run(&cfg, |_| Ok(0)).unwrap();
        assert_eq!(r.value, Some(360.0));
        assert_eq!(r.trials.len(), 3);
        let mut cfg1 = cfg.clone();
        cfg1.limiting_type = LimitingType::I;
        let r = un_staircase_run(&cfg1, |_| Ok(0)).unwrap();
        assert_eq!(r.value, None);
        assert_eq!(r.classification, None);
    }

    #[test]
    fn initial_stage_escalates_then_descends() {
        let g = notch6_grid();
        let cfg = UnStaircaseConfig::preset(UnVariant::I1, g, None).unwrap();
        // mid index of 10 levels is 4 → 60
        let seq = expand(&[(60.0, "0"), (80.0, "0"), (120.0, "1"), (80.0, "000000")]);
        let r = un_staircase_run(&cfg, scripted(seq)).unwrap();
        assert_eq!(r.value, Some(120.0));
        // all negatives: escalate to the top, which then counts toward K
        let r = un_staircase_run(&cfg, |_| Ok(0)).unwrap();
        assert_eq!(r.trials.len(), 5 + 6);
        assert!(r.trials.iter().skip(5).all(|t| t.stimulus == 360.0));
    }

    #[test]
    fn floor_hit_terminates_at_minimum() {
        let cfg = UnStaircaseConfig::preset(UnVariant::F1, notch6_grid(), None).unwrap();
        let r = un_staircase_run(&cfg, |_| Ok(1)).unwrap();
        assert!(r.floor_hit);
        assert_eq!(r.value, Some(5.0));
        assert_eq!(r.trials.len(), 10);
    }

    #[test]
    fn f2_needs_explicit_start() {
        assert!(UnStaircaseConfig::preset(UnVariant::F2, notch6_grid(), None).is_err());
        assert!(UnStaircaseConfig::preset(UnVariant::F2, notch6_grid(), Some(97.0)).is_err());
        let c = UnStaircaseConfig::preset(UnVariant::F2, notch6_grid(), Some(120.0)).unwrap();
        assert_eq!(c.k, 25);
        assert_eq!(c.start_index(), 6);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(48.0, 80.0), Classification::Sensitive);
        assert_eq!(classify(80.0, 80.0), Classification::Insensitive);
        assert_eq!(classify(5.0, 0.0), Classification::Insensitive);
    }

    proptest! {
        #[test]
        fn stays_on_grid_and_runs_at_least_k(
            variant in prop_oneof![Just(UnVariant::F1), Just(UnVariant::I1), Just(UnVariant::I2), Just(UnVariant::I3)],
            probs in proptest::collection::vec(0.0f64..1.0, 64),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let g = all_intermediate_grid();
            let cfg = UnStaircaseConfig::preset(variant, g.clone(), None).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let r = un_staircase_run(&cfg, |x| {
                let i = g.index_of(x).unwrap();
                Ok(u8::from(rng.random::<f64>() < probs[i]))
            }).unwrap();
            prop_assert!(r.trials.iter().all(|t| g.contains(t.stimulus)));
            if !r.floor_hit {
                prop_assert!(r.trials.len() >= cfg.k);
                let tail = &r.trials[r.trials.len() - cfg.k..];
                prop_assert!(tail.iter().all(|t| t.outcome == 0 && t.stimulus == tail[0].stimulus));
            }
        }
    }
}
