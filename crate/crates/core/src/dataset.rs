//! Trial datasets and their delimited-text format.
//!
//! ```text
//! # free-form note
//! index,stimulus,unit,outcome,label
//! 1,360,N,1,B9/6
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::TrialRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub unit: String,
    pub trials: Vec<TrialRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    index: usize,
    stimulus: f64,
    unit: String,
    outcome: u8,
    #[serde(default)]
    label: Option<String>,
}

/// Per-level aggregate: (stimulus, positives, trials), ascending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelCount {
    pub stimulus: f64,
    pub positives: usize,
    pub trials: usize,
}

impl Dataset {
    pub fn new(unit: impl Into<String>, trials: Vec<TrialRecord>) -> Self {
        Self {
            unit: unit.into(),
            trials,
            notes: Vec::new(),
        }
    }

    /// Build from (stimulus, outcome) pairs in order.
    pub fn from_pairs(unit: impl Into<String>, pairs: &[(f64, u8)]) -> Self {
        let trials = pairs
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| TrialRecord::new(i + 1, x, y, None))
            .collect();
        Self::new(unit, trials)
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.trials.iter().enumerate() {
            if !(t.stimulus > 0.0 && t.stimulus.is_finite()) {
                return Err(Error::Dataset(format!(
                    "trial {}: stimulus must be positive, got {}",
                    t.index, t.stimulus
                )));
            }
            if t.outcome > 1 {
                return Err(Error::Dataset(format!(
                    "trial {}: outcome must be 0 or 1, got {}",
                    t.index, t.outcome
                )));
            }
            if i > 0 && t.index <= self.trials[i - 1].index {
                return Err(Error::Dataset(format!(
                    "trial indices must increase (trial {} follows {})",
                    t.index,
                    self.trials[i - 1].index
                )));
            }
        }
        Ok(())
    }

    /// Counts per distinct stimulus, ascending.
    pub fn level_counts(&self) -> Vec<LevelCount> {
        let mut xs: Vec<(f64, u8)> = self.trials.iter().map(|t| (t.stimulus, t.outcome)).collect();
        xs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<LevelCount> = Vec::new();
        for (x, y) in xs {
            match out.last_mut() {
                Some(l) if crate::grid::same_value(l.stimulus, x) => {
                    l.trials += 1;
                    l.positives += usize::from(y);
                }
                _ => out.push(LevelCount {
                    stimulus: x,
                    positives: usize::from(y),
                    trials: 1,
                }),
            }
        }
        out
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut notes = Vec::new();
        let mut body = String::new();
        for line in reader.lines() {
            let line = line.map_err(|e| Error::io("<dataset>", e))?;
            match line.trim_start().strip_prefix('#') {
                Some(note) => notes.push(note.trim().to_string()),
                None if line.trim().is_empty() => {}
                None => {
                    body.push_str(&line);
                    body.push('\n');
                }
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        let headers = rdr.headers()?.clone();
        for required in ["index", "stimulus", "unit", "outcome"] {
            if !headers.iter().any(|h| h == required) {
                return Err(Error::Dataset(format!("missing column `{required}`")));
            }
        }
        let mut unit: Option<String> = None;
        let mut trials = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            match &unit {
                None => unit = Some(row.unit.clone()),
                Some(u) if *u != row.unit => {
                    return Err(Error::Dataset(format!(
                        "trial {}: unit `{}` differs from `{u}`",
                        row.index, row.unit
                    )))
                }
                _ => {}
            }
            let label = row.label.filter(|l| !l.is_empty());
            trials.push(TrialRecord::new(row.index, row.stimulus, row.outcome, label.as_deref()));
        }
        let ds = Dataset {
            unit: unit.unwrap_or_else(|| "N".to_string()),
            trials,
            notes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for n in &self.notes {
            writeln!(w, "# {n}").map_err(|e| Error::io("<dataset>", e))?;
        }
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wtr.write_record(["index", "stimulus", "unit", "outcome", "label"])?;
        for t in &self.trials {
            wtr.write_record([
                t.index.to_string(),
                t.stimulus.to_string(),
                self.unit.clone(),
                t.outcome.to_string(),
                t.grid_label.clone().unwrap_or_default(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<dataset>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
    }
}

const PETN_TABLE3: &str = include_str!("../fixtures/petn_table3.csv");
const PETN_TABLE4: &str = include_str!("../fixtures/petn_table4.csv");
const PETN_TABLE5: &str = include_str!("../fixtures/petn_table5.csv");
const PETN_TABLE6: &str = include_str!("../fixtures/petn_table6.csv");

pub const FIXTURE_NAMES: [&str; 4] = ["petn_table3", "petn_table4", "petn_table5", "petn_table6"];

/// Packaged PETN friction datasets by alias.
pub fn fixture(name: &str) -> Result<Dataset> {
    let text = match name {
        "petn_table3" => PETN_TABLE3,
        "petn_table4" => PETN_TABLE4,
        "petn_table5" => PETN_TABLE5,
        "petn_table6" => PETN_TABLE6,
        other => return Err(Error::Dataset(format!("unknown fixture `{other}`"))),
    };
    Dataset::parse(text)
}

/// Load a dataset from a fixture alias or a file path.
pub fn load(name_or_path: &str) -> Result<Dataset> {
    if FIXTURE_NAMES.contains(&name_or_path) {
        fixture(name_or_path)
    } else {
        Dataset::read_path(name_or_path)
    }
}
