use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    Sw,
    Mom,
    Rbf,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Baseline => "baseline",
            Variant::Sw => "sw",
            Variant::Mom => "mom",
            Variant::Rbf => "rbf",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Variant::Baseline),
            "sw" => Ok(Variant::Sw),
            "mom" => Ok(Variant::Mom),
            "rbf" => Ok(Variant::Rbf),
            other => Err(Error::config(format!("unknown variant `{other}`"))),
        }
    }
}

/// How transfer partners are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PairSelection {
    /// Pairs listed up front from prior knowledge of the plant.
    Fixed,
    /// Pairs picked from the latent similarity matrix once, at the given
    /// adaptation step; no transfer happens before that.
    Rbf { at_adaptation: u64, top_k: usize },
}

/// Which players exchange knowledge, and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferPlan {
    /// Undirected player pairs, by player index.
    pub pairs: Vec<(usize, usize)>,
    pub variant: Variant,
    pub beta_tf: f64,
    pub horizon: usize,
    pub alpha_mom: f64,
    pub selection: PairSelection,
}

impl TransferPlan {
    pub fn baseline() -> Self {
        Self {
            pairs: Vec::new(),
            variant: Variant::Baseline,
            beta_tf: 0.0,
            horizon: 1,
            alpha_mom: 0.5,
            selection: PairSelection::Fixed,
        }
    }

    pub fn validate(&self, players: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta_tf) {
            return Err(Error::config(format!("beta_tf {} outside [0, 1]", self.beta_tf)));
        }
        if self.variant == Variant::Sw && self.horizon < 1 {
            return Err(Error::config("sliding-window horizon must be >= 1"));
        }
        if self.variant == Variant::Mom && !(0.0..=1.0).contains(&self.alpha_mom) {
            return Err(Error::config(format!("alpha_mom {} outside [0, 1]", self.alpha_mom)));
        }
        let mut seen = BTreeSet::new();
        for &(i, j) in &self.pairs {
            if i == j {
                return Err(Error::config(format!("player {i} paired with itself")));
            }
            if i >= players || j >= players {
                return Err(Error::config(format!(
                    "pair ({i}, {j}) references a player outside 0..{players}"
                )));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::config(format!("pair ({i}, {j}) listed twice")));
            }
        }
        Ok(())
    }

    /// Partners of `player` across all listed pairs.
    pub fn partners(&self, player: usize) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().filter_map(move |&(i, j)| {
            if i == player {
                Some(j)
            } else if j == player {
                Some(i)
            } else {
                None
            }
        })
    }

    pub fn involves(&self, player: usize) -> bool {
        self.partners(player).next().is_some()
    }
}
