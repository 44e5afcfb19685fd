//! Experiment configuration: plant, utility weights, run length, exploration
//! decay, transfer pairs and latent settings in one TOML document.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{
    build_graph, ActuatorSpec, ModuleGraph, PlantSpec, SequenceSpec, StationSpec, UtilityWeights,
    DEFAULT_BGS, DEFAULT_LSBGS,
};
use crate::error::{Error, Result};
use crate::rbf::RbfConfig;
use crate::sbpg::DecaySchedule;
use crate::transfer::{PairSelection, TransferPlan, Variant};

/// Names accepted in place of a config path.
pub const BUILTIN_CONFIGS: [&str; 2] = ["bgs_default", "lsbgs_default"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub episodes: usize,
    pub steps_per_episode: u64,
    #[serde(default = "default_interval")]
    pub adaptation_interval: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
}

fn default_interval() -> u64 {
    10
}

fn default_bins() -> usize {
    40
}

fn default_variant() -> Variant {
    Variant::Baseline
}

impl RunSpec {
    pub fn adaptations_per_episode(&self) -> u64 {
        self.steps_per_episode / self.adaptation_interval
    }

    pub fn total_adaptations(&self) -> u64 {
        self.adaptations_per_episode() * self.episodes as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySpec {
    pub eps0: f64,
    pub eps_min: f64,
    /// Fraction of all adaptation steps after which the floor is reached.
    pub floor_fraction: f64,
}

impl Default for DecaySpec {
    fn default() -> Self {
        Self {
            eps0: 1.0,
            eps_min: 0.02,
            floor_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    #[default]
    Fixed,
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSpec {
    /// Player names; fixed pairs, or ignored under latent selection.
    #[serde(default)]
    pub pairs: Vec<[String; 2]>,
    /// Falls back to the variant's default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_tf: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_alpha_mom")]
    pub alpha_mom: f64,
    #[serde(default)]
    pub selection: SelectionMode,
    /// Adaptation step at which latent selection picks pairs.
    #[serde(default = "default_select_at")]
    pub select_at: u64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

fn default_horizon() -> usize {
    10
}

fn default_alpha_mom() -> f64 {
    0.5
}

fn default_select_at() -> u64 {
    500
}

fn default_top_k() -> usize {
    2
}

impl Default for TransferSpec {
    fn default() -> Self {
        Self {
            pairs: Vec::new(),
            beta_tf: None,
            horizon: default_horizon(),
            alpha_mom: default_alpha_mom(),
            selection: SelectionMode::Fixed,
            select_at: default_select_at(),
            top_k: default_top_k(),
        }
    }
}

/// Exploration threshold used when the config leaves it open.
pub fn default_beta_tf(variant: Variant) -> f64 {
    match variant {
        Variant::Baseline => 0.0,
        Variant::Sw => 0.40,
        Variant::Mom => 0.80,
        Variant::Rbf => 0.24,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfSpec {
    #[serde(default = "default_grid_side")]
    pub grid_side: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default = "default_update_interval")]
    pub update_interval: u64,
}

fn default_grid_side() -> usize {
    3
}

fn default_update_interval() -> u64 {
    10
}

impl Default for RbfSpec {
    fn default() -> Self {
        Self {
            grid_side: default_grid_side(),
            sigma: None,
            update_interval: default_update_interval(),
        }
    }
}

impl RbfSpec {
    pub fn for_dim(&self, dim: usize) -> Result<RbfConfig> {
        RbfConfig::grid(dim, self.grid_side, self.sigma, self.update_interval)
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub station: BTreeMap<String, StationSpec>,
    #[serde(default)]
    pub actuator: BTreeMap<String, ActuatorSpec>,
    pub sequence: SequenceSpec,
    #[serde(default)]
    pub utility: UtilityWeights,
    pub run: RunSpec,
    #[serde(default)]
    pub decay: DecaySpec,
    #[serde(default)]
    pub transfer: TransferSpec,
    #[serde(default)]
    pub rbf: RbfSpec,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "bgs_default" => DEFAULT_BGS,
            "lsbgs_default" => DEFAULT_LSBGS,
            _ => return None,
        };
        Some(Self::parse(text).expect("builtin config is valid"))
    }

    /// Reads a config file, or a builtin when `source` names one and no such file exists.
    pub fn load(source: &str) -> Result<Self> {
        let path = Path::new(source);
        if !path.exists() {
            if let Some(config) = Self::builtin(source) {
                return Ok(config);
            }
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config `{source}`: {e}")))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let run = &self.run;
        if run.episodes < 1 {
            return Err(Error::config("episodes must be >= 1"));
        }
        if run.adaptation_interval < 1 || !run.steps_per_episode.is_multiple_of(run.adaptation_interval) {
            return Err(Error::config(format!(
                "adaptation interval {} must divide steps per episode {}",
                run.adaptation_interval, run.steps_per_episode
            )));
        }
        if run.steps_per_episode == 0 {
            return Err(Error::config("steps per episode must be > 0"));
        }
        if run.bins < 2 {
            return Err(Error::config("bins must be >= 2"));
        }
        self.utility.validate()?;
        self.schedule()?;
        if let Some(b) = self.transfer.beta_tf {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::config(format!("beta_tf {b} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn plant(&self) -> PlantSpec {
        PlantSpec {
            station: self.station.clone(),
            actuator: self.actuator.clone(),
            sequence: Some(self.sequence.clone()),
        }
    }

    pub fn graph(&self) -> Result<ModuleGraph> {
        build_graph(&self.plant())
    }

    pub fn with_sequence(mut self, order: &str) -> Self {
        self.sequence.order = order.to_string();
        self
    }

    pub fn beta_tf(&self) -> f64 {
        self.transfer
            .beta_tf
            .unwrap_or_else(|| default_beta_tf(self.run.variant))
    }

    pub fn schedule(&self) -> Result<DecaySchedule> {
        DecaySchedule::reaching_floor_at(
            self.decay.eps0,
            self.decay.eps_min,
            self.run.total_adaptations().max(1),
            self.decay.floor_fraction,
        )
    }

    /// Resolves pair names against the built graph. Names may refer to a
    /// base actuator name, which expands to every instance of it.
    pub fn transfer_plan(&self, graph: &ModuleGraph) -> Result<TransferPlan> {
        let variant = self.run.variant;
        if variant == Variant::Baseline {
            return Ok(TransferPlan::baseline());
        }
        let selection = match self.transfer.selection {
            SelectionMode::Fixed => PairSelection::Fixed,
            SelectionMode::Rbf => PairSelection::Rbf {
                at_adaptation: self.transfer.select_at,
                top_k: self.transfer.top_k,
            },
        };
        let mut pairs = Vec::new();
        if selection == PairSelection::Fixed {
            for [a, b] in &self.transfer.pairs {
                let i = resolve(graph, a)?;
                let j = resolve(graph, b)?;
                if graph.state_dim(i) != graph.state_dim(j) {
                    return Err(Error::config(format!(
                        "players `{a}` and `{b}` observe states of different dimension"
                    )));
                }
                pairs.push((i, j));
            }
        }
        let plan = TransferPlan {
            pairs,
            variant,
            beta_tf: self.beta_tf(),
            horizon: self.transfer.horizon,
            alpha_mom: self.transfer.alpha_mom,
            selection,
        };
        plan.validate(graph.actuators.len())?;
        Ok(plan)
    }
}

fn resolve(graph: &ModuleGraph, name: &str) -> Result<usize> {
    graph
        .player_index(name)
        .ok_or_else(|| Error::config(format!("transfer pair names unknown player `{name}`")))
}
