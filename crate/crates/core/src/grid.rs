//! Discrete stimulus grids and the BAM friction load table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loads at notch 1 for weights B1..B9; notch k multiplies by 1 + 0.2(k − 1).
const FRICTION_BASE: [(&str, f64); 9] = [
    ("B1", 5.0),
    ("B2", 10.0),
    ("B3", 20.0),
    ("B4", 30.0),
    ("B5", 40.0),
    ("B6", 60.0),
    ("B7", 80.0),
    ("B8", 120.0),
    ("B9", 180.0),
];

const REL_TOL: f64 = 1e-9;

/// One weight/notch cell of the friction table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrictionCell {
    pub weight: String,
    pub notch: u8,
    pub load: f64,
}

impl FrictionCell {
    pub fn label(&self) -> String {
        format!("{}/{}", self.weight, self.notch)
    }
}

/// All 54 cells of the friction table, weight-major.
pub fn friction_table() -> Vec<FrictionCell> {
    let mut cells = Vec::with_capacity(54);
    for (weight, base) in FRICTION_BASE {
        for notch in 1..=6u8 {
            // loads are integers; round away the 1.2, 1.4, ... multiplier noise
            let load = (base * (1.0 + 0.2 * f64::from(notch - 1))).round();
            cells.push(FrictionCell {
                weight: weight.to_string(),
                notch,
                load,
            });
        }
    }
    cells
}

/// Every cell producing `load`, highest notch first.
pub fn friction_cells_for(load: f64) -> Vec<FrictionCell> {
    let mut cells: Vec<_> = friction_table()
        .into_iter()
        .filter(|c| same_value(c.load, load))
        .collect();
    cells.sort_by(|a, b| b.notch.cmp(&a.notch));
    cells
}

/// Primary weight/notch label of a load: the highest-notch cell.
pub fn friction_label(load: f64) -> Option<String> {
    friction_cells_for(load).first().map(FrictionCell::label)
}

pub(crate) fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnapPolicy {
    #[default]
    Nearest,
    NearestAbove,
    NearestBelow,
}

impl std::str::FromStr for SnapPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(SnapPolicy::Nearest),
            "nearest-above" => Ok(SnapPolicy::NearestAbove),
            "nearest-below" => Ok(SnapPolicy::NearestBelow),
            other => Err(Error::config("snap_policy", format!("unknown policy `{other}`"))),
        }
    }
}

/// A strictly increasing, nonempty set of admissible stimuli.
///
/// Deserializes either from a builtin name (`"notch6"`) or from an explicit
/// `{ values, labels }` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr")]
pub struct StimulusGrid {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GridRepr {
    Named(String),
    Explicit {
        #[serde(default)]
        name: Option<String>,
        values: Vec<f64>,
        #[serde(default)]
        labels: Option<Vec<String>>,
    },
}

impl TryFrom<GridRepr> for StimulusGrid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        match r {
            GridRepr::Named(n) => builtin_grid(&n),
            GridRepr::Explicit {
                name,
                values,
                labels,
            } => {
                let mut g = StimulusGrid::with_labels(values, labels)?;
                g.name = name;
                Ok(g)
            }
        }
    }
}

impl StimulusGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_labels(values, None)
    }

    pub fn with_labels(values: Vec<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Grid("grid must be nonempty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Grid(format!("grid values must be positive and finite, got {v}")));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Grid("grid values must be strictly increasing".into()));
        }
        if let Some(l) = &labels {
            if l.len() != values.len() {
                return Err(Error::Grid(format!(
                    "{} labels for {} grid values",
                    l.len(),
                    values.len()
                )));
            }
        }
        Ok(Self {
            name: None,
            values,
            labels,
        })
    }

    fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn label(&self, i: usize) -> Option<&str> {
        self.labels.as_ref().map(|l| l[i].as_str())
    }

    /// Label of `x` if it is a grid member.
    pub fn label_of(&self, x: f64) -> Option<&str> {
        self.index_of(x).and_then(|i| self.label(i))
    }

    pub fn index_of(&self, x: f64) -> Option<usize> {
        let i = self.values.partition_point(|&v| v < x && !same_value(v, x));
        (i < self.values.len() && same_value(self.values[i], x)).then_some(i)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.index_of(x).is_some()
    }

    /// Index roughly in the middle of the range.
    pub fn mid_index(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    pub fn snap(&self, x: f64, policy: SnapPolicy) -> Result<f64> {
        snap_to_grid(x, self, policy)
    }
}

/// Snap `x` to a grid member under `policy`.
pub fn snap_to_grid(x: f64, grid: &StimulusGrid, policy: SnapPolicy) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Grid("cannot snap NaN".into()));
    }
    if let Some(i) = grid.index_of(x) {
        return Ok(grid.values[i]);
    }
    let v = &grid.values;
    let above = v.partition_point(|&g| g < x);
    match policy {
        SnapPolicy::NearestAbove => v
            .get(above)
            .copied()
            .ok_or_else(|| Error::Grid(format!("{x} lies above the grid maximum {}", grid.max()))),
        SnapPolicy::NearestBelow => {
            if above == 0 {
                Err(Error::Grid(format!("{x} lies below the grid minimum {}", grid.min())))
            } else {
                Ok(v[above - 1])
            }
        }
        SnapPolicy::Nearest => {
            let hi = v.get(above).copied();
            let lo = above.checked_sub(1).map(|i| v[i]);
            Ok(match (lo, hi) {
                (Some(l), Some(h)) => {
                    // ties resolve upward
                    if x - l < h - x {
                        l
                    } else {
                        h
                    }
                }
                (Some(l), None) => l,
                (None, Some(h)) => h,
                (None, None) => unreachable!("grid is nonempty"),
            })
        }
    }
}

fn labelled(values: Vec<f64>) -> StimulusGrid {
    let labels = values
        .iter()
        .map(|&v| friction_label(v).unwrap_or_default())
        .collect();
    StimulusGrid::with_labels(values, Some(labels)).expect("builtin grid is valid")
}

/// Loads listed in the F1 procedure text.
pub fn f1_default_grid() -> StimulusGrid {
    labelled(vec![5.0, 10.0, 20.0, 40.0, 60.0, 80.0, 120.0, 240.0, 360.0]).named("f1-default")
}

/// Notch 6 for every weight, plus 5 N from B1 at notch 1.
pub fn notch6_grid() -> StimulusGrid {
    let mut v: Vec<f64> = friction_table()
        .iter()
        .filter(|c| c.notch == 6)
        .map(|c| c.load)
        .collect();
    v.insert(0, 5.0);
    labelled(v).named("notch6")
}

/// Every distinct load in the friction table.
pub fn all_intermediate_grid() -> StimulusGrid {
    let mut v: Vec<f64> = friction_table().iter().map(|c| c.load).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    labelled(v).named("all-intermediate")
}

pub const BUILTIN_GRID_NAMES: [&str; 3] = ["f1-default", "notch6", "all-intermediate"];

pub fn builtin_grid(name: &str) -> Result<StimulusGrid> {
    match name {
        "f1-default" | "f1" | "default" => Ok(f1_default_grid()),
        "notch6" | "notch-6" => Ok(notch6_grid()),
        "all-intermediate" | "all" => Ok(all_intermediate_grid()),
        other => Err(Error::config("grid", format!("unknown builtin grid `{other}`"))),
    }
}

/// All builtin grids keyed by canonical name.
pub fn builtin_grids() -> Vec<(&'static str, StimulusGrid)> {
    BUILTIN_GRID_NAMES
        .iter()
        .map(|&n| (n, builtin_grid(n).unwrap()))
        .collect()
}
