//! Discretized performance maps: the policy representation of a best-response
//! learner.
//!
//! Every player owns a dense grid over its (normalized) local state space. A
//! cell stores the best action seen in that region together with the utility
//! it earned. Actions for arbitrary states are recovered by inverse-distance
//! weighting over all populated cells, whose support points sit at the cell
//! centers `(k + 0.5) / B`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regularizer in the inverse squared distance weights.
pub const IDW_DELTA: f64 = 1e-9;

/// Squared distances below this count as an exact hit on a support point.
const EXACT_HIT_D2: f64 = 1e-18;

/// Normalized fill levels of the reservoirs a player observes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::config(format!("state component {v} outside [0, 1]")));
        }
        Ok(Self(values))
    }

    /// Builds a state, clamping each component into `[0, 1]`.
    pub fn clamped(values: impl IntoIterator<Item = f64>) -> Self {
        Self(values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Normalized actuator setpoint in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Action(f64);

impl Action {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::config(format!("action {value} outside [0, 1]")));
        }
        Ok(Self(value))
    }

    pub fn clamped(value: f64) -> Self {
        Self(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DiscretizedIndex {
    bins: Vec<usize>,
    bins_per_dim: usize,
}

impl DiscretizedIndex {
    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn bins_per_dim(&self) -> usize {
        self.bins_per_dim
    }

    /// Row-major flat offset, first dimension most significant.
    pub fn flat(&self) -> usize {
        self.bins
            .iter()
            .fold(0, |acc, &b| acc * self.bins_per_dim + b)
    }
}

/// Equidistant binning: `k = floor(v * B)`, with `v = 1.0` folded into the last bin.
pub fn discretize(state: &StateVector, bins_per_dim: usize) -> Result<DiscretizedIndex> {
    if bins_per_dim < 2 {
        return Err(Error::config(format!(
            "bins per dimension must be >= 2, got {bins_per_dim}"
        )));
    }
    let bins = state
        .values()
        .iter()
        .map(|&v| {
            let k = (v * bins_per_dim as f64).floor() as usize;
            k.min(bins_per_dim - 1)
        })
        .collect();
    Ok(DiscretizedIndex { bins, bins_per_dim })
}

/// Center of bin `k` out of `bins_per_dim`.
pub fn bin_center(k: usize, bins_per_dim: usize) -> f64 {
    (k as f64 + 0.5) / bins_per_dim as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub best_action: Option<Action>,
    pub best_utility: f64,
}

impl Cell {
    const EMPTY: Cell = Cell {
        best_action: None,
        best_utility: f64::NEG_INFINITY,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceMap {
    dim: usize,
    bins_per_dim: usize,
    cells: Vec<Cell>,
    /// Flat indices of populated cells, ascending, so a reloaded map sums in the same order.
    filled: Vec<usize>,
}

impl PerformanceMap {
    pub fn new(dim: usize, bins_per_dim: usize) -> Result<Self> {
        if bins_per_dim < 2 {
            return Err(Error::config("bins per dimension must be >= 2"));
        }
        let len = bins_per_dim
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::config("performance map too large"))?;
        Ok(Self {
            dim,
            bins_per_dim,
            cells: vec![Cell::EMPTY; len],
            filled: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bins_per_dim(&self) -> usize {
        self.bins_per_dim
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filled.is_empty()
    }

    pub fn populated(&self) -> usize {
        self.filled.len()
    }

    pub fn cell(&self, index: &DiscretizedIndex) -> Cell {
        self.cells[index.flat()]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn index_of(&self, state: &StateVector) -> Result<DiscretizedIndex> {
        if state.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: state.dim(),
            });
        }
        discretize(state, self.bins_per_dim)
    }

    /// Support point (cell center) of a flat cell offset.
    pub fn center(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let mut rest = flat;
        for slot in out.iter_mut().rev() {
            *slot = bin_center(rest % self.bins_per_dim, self.bins_per_dim);
            rest /= self.bins_per_dim;
        }
        out
    }

    /// Populated cells as `(center, best_action, best_utility)`.
    pub fn support_points(&self) -> impl Iterator<Item = (Vec<f64>, f64, f64)> + '_ {
        self.filled.iter().map(move |&flat| {
            let cell = self.cells[flat];
            let action = cell.best_action.map(Action::value).unwrap_or_default();
            (self.center(flat), action, cell.best_utility)
        })
    }

    /// Strict-improvement best-response update. Returns whether the cell changed.
    pub fn update(&mut self, state: &StateVector, action: Action, utility: f64) -> Result<bool> {
        if utility.is_nan() {
            return Err(Error::InvalidUtility(utility));
        }
        let flat = self.index_of(state)?.flat();
        let cell = &mut self.cells[flat];
        if utility > cell.best_utility {
            if cell.best_action.is_none() {
                if let Err(pos) = self.filled.binary_search(&flat) {
                    self.filled.insert(pos, flat);
                }
            }
            *cell = Cell {
                best_action: Some(action),
                best_utility: utility,
            };
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Inverse squared distance interpolation over all populated cells.
    pub fn interpolate(&self, state: &StateVector) -> Result<Action> {
        if state.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: state.dim(),
            });
        }
        if self.filled.is_empty() {
            return Err(Error::NoKnowledge);
        }
        let s = state.values();
        let mut num = 0.0;
        let mut den = 0.0;
        for &flat in &self.filled {
            let action = self.cells[flat]
                .best_action
                .expect("filled cell has an action")
                .value();
            let mut rest = flat;
            let mut d2 = 0.0;
            for &component in s.iter().rev() {
                let c = bin_center(rest % self.bins_per_dim, self.bins_per_dim);
                rest /= self.bins_per_dim;
                d2 += (component - c) * (component - c);
            }
            if d2 < EXACT_HIT_D2 {
                return Ok(Action::clamped(action));
            }
            let w = 1.0 / (d2 + IDW_DELTA);
            num += w * action;
            den += w;
        }
        Ok(Action::clamped(num / den))
    }

    /// Text table: a header line with `dim` and `bins`, then one `action utility`
    /// row per cell in row-major order. Empty cells carry `-inf` as utility.
    pub fn write_table<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::with_capacity(self.cells.len() * 24);
        writeln!(buf, "dim {} bins {}", self.dim, self.bins_per_dim).ok();
        for cell in &self.cells {
            match cell.best_action {
                Some(a) => writeln!(buf, "{} {}", a.value(), cell.best_utility).ok(),
                None => writeln!(buf, "0 -inf").ok(),
            };
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn to_table(&self) -> String {
        let mut out = Vec::new();
        self.write_table(&mut out).expect("writing to a Vec cannot fail");
        String::from_utf8(out).expect("table is ascii")
    }

    pub fn read_table<R: Read>(input: R) -> Result<Self> {
        let bad = |msg: String| Error::PolicyLoad(msg);
        let mut lines = BufReader::new(input).lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty policy file".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (dim, bins) = match fields.as_slice() {
            ["dim", d, "bins", b] => (
                d.parse::<usize>()
                    .map_err(|e| bad(format!("bad dim `{d}`: {e}")))?,
                b.parse::<usize>()
                    .map_err(|e| bad(format!("bad bins `{b}`: {e}")))?,
            ),
            _ => return Err(bad(format!("malformed header `{header}`"))),
        };
        let mut map = Self::new(dim, bins).map_err(|e| bad(e.to_string()))?;
        let mut row = 0usize;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if row >= map.cells.len() {
                return Err(bad(format!("more than {} cell rows", map.cells.len())));
            }
            let mut parts = line.split_whitespace();
            let (Some(a), Some(u), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad(format!("malformed row {}: `{line}`", row + 2)));
            };
            let action: f64 = a
                .parse()
                .map_err(|_| bad(format!("bad action `{a}` in row {}", row + 2)))?;
            let utility: f64 = u
                .parse()
                .map_err(|_| bad(format!("bad utility `{u}` in row {}", row + 2)))?;
            if utility.is_nan() {
                return Err(bad(format!("NaN utility in row {}", row + 2)));
            }
            if utility != f64::NEG_INFINITY {
                let action = Action::new(action).map_err(|e| bad(e.to_string()))?;
                map.cells[row] = Cell {
                    best_action: Some(action),
                    best_utility: utility,
                };
                map.filled.push(row);
            }
            row += 1;
        }
        if row != map.cells.len() {
            return Err(bad(format!(
                "expected {} cell rows, found {row}",
                map.cells.len()
            )));
        }
        Ok(map)
    }
}
