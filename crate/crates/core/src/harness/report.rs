use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sbpg::PerformanceMap;
use crate::transfer::Variant;

/// Averages over one full episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    /// Mean total power, kW.
    pub power_kw: f64,
    /// Mean overflow rate, L/s.
    pub overflow_lps: f64,
    /// Mean signed demand deviation, L/s; negative when short.
    pub demand_deviation_lps: f64,
    /// Mean potential over the episode's adaptation steps.
    pub potential: f64,
    /// Adaptation steps where a demand denominator hit its floor.
    pub demand_clamped: usize,
}

/// One row of the metrics stream, written at every adaptation step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub step: u64,
    pub episode: usize,
    pub power_kw: Vec<f64>,
    pub overflow_lps: f64,
    pub demand_deviation_lps: f64,
    pub utilities: Vec<f64>,
    pub potential: f64,
}

/// One player/partner transfer computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferRecord {
    pub step: u64,
    pub episode: usize,
    pub player: String,
    pub partner: String,
    pub epsilon: f64,
    pub beta_tf: f64,
    pub divergence: f64,
    pub alpha_tf: f64,
    pub loss: f64,
    pub utility: f64,
    pub modified_utility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub variant: Variant,
    pub seed: u64,
    pub sequence: String,
    pub players: Vec<String>,
    pub episodes: Vec<EpisodeSummary>,
    /// Potential averaged over the last training episode.
    pub final_potential: f64,
    pub maps: BTreeMap<String, PerformanceMap>,
    pub trace: Vec<TransferRecord>,
    pub metrics: Vec<MetricsRow>,
    /// Pairs in force at the end of the run, by name.
    pub pairs: Vec<(String, String)>,
    /// Greedy episode run after training, when requested.
    pub evaluation: Option<EpisodeSummary>,
}

impl RunReport {
    pub fn mean_power_kw(&self) -> f64 {
        mean(self.episodes.iter().map(|e| e.power_kw))
    }

    pub fn last_episode(&self) -> Option<&EpisodeSummary> {
        self.episodes.last()
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("step,episode");
        for p in &self.players {
            write!(out, ",power_{p}").ok();
        }
        out.push_str(",overflow_lps,demand_deviation_lps");
        for p in &self.players {
            write!(out, ",utility_{p}").ok();
        }
        out.push_str(",potential\n");
        for row in &self.metrics {
            write!(out, "{},{}", row.step, row.episode).ok();
            for v in &row.power_kw {
                write!(out, ",{v}").ok();
            }
            write!(out, ",{},{}", row.overflow_lps, row.demand_deviation_lps).ok();
            for v in &row.utilities {
                write!(out, ",{v}").ok();
            }
            writeln!(out, ",{}", row.potential).ok();
        }
        out
    }

    pub fn episodes_csv(&self) -> String {
        let mut out = String::from(
            "episode,avg_power_kw,avg_overflow_lps,avg_demand_deviation_lps,potential,demand_clamped\n",
        );
        let rows = self
            .episodes
            .iter()
            .map(|e| (e.episode.to_string(), e))
            .chain(self.evaluation.iter().map(|e| ("eval".to_string(), e)));
        for (label, e) in rows {
            writeln!(
                out,
                "{label},{},{},{},{},{}",
                e.power_kw, e.overflow_lps, e.demand_deviation_lps, e.potential, e.demand_clamped
            )
            .ok();
        }
        out
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from(
            "step,episode,player,partner,epsilon,beta_tf,divergence,alpha_tf,loss,utility,modified_utility\n",
        );
        for r in &self.trace {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.step,
                r.episode,
                r.player,
                r.partner,
                r.epsilon,
                r.beta_tf,
                r.divergence,
                r.alpha_tf,
                r.loss,
                r.utility,
                r.modified_utility
            )
            .ok();
        }
        out
    }

    /// Writes the CSV reports and one map table per player into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("maps"))?;
        fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        fs::write(dir.join("episodes.csv"), self.episodes_csv())?;
        fs::write(dir.join("transfer_trace.csv"), self.trace_csv())?;
        for (name, map) in &self.maps {
            fs::write(dir.join("maps").join(map_file_name(name)), map.to_table())?;
        }
        Ok(())
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// `#` is kept out of file names.
pub fn map_file_name(player: &str) -> String {
    format!("{}.map", player.replace('#', "__"))
}

/// Loads every `*.map` table in a directory, keyed by player name.
pub fn load_maps(dir: &Path) -> Result<BTreeMap<String, PerformanceMap>> {
    let entries = fs::read_dir(dir)
        .map_err(|e| Error::PolicyLoad(format!("cannot read {}: {e}", dir.display())))?;
    let mut maps = BTreeMap::new();
    for entry in entries {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("map") {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::PolicyLoad(format!("bad file name {}", path.display())))?;
        let file = fs::File::open(&path)?;
        let map = PerformanceMap::read_table(std::io::BufReader::new(file))
            .map_err(|e| Error::PolicyLoad(format!("{}: {e}", path.display())))?;
        maps.insert(stem.replace("__", "#"), map);
    }
    if maps.is_empty() {
        return Err(Error::PolicyLoad(format!("no map files in {}", dir.display())));
    }
    Ok(maps)
}
