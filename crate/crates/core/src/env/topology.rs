//! Station inventory, production sequences and the reservoir/actuator graph.
//!
//! Stations pull material: each station's first actuator draws from the exit
//! reservoir(s) of the preceding stage (`source = "prev"`), moves it through
//! its own reservoirs, and leaves it in the station's exit reservoir. A
//! `demand` station closes the line; the exit reservoirs feeding it are the
//! final buffers drained at the demand rate.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActuatorKind {
    /// Speed-controlled drive (belt conveyor, rotary feeder).
    Continuous,
    /// Duty-cycled device (vacuum pump): action is the active fraction of a step.
    Duration,
    /// On/off device (vibratory conveyor), switched at action 0.5.
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirSpec {
    pub name: String,
    pub capacity: f64,
    /// Initial fill, normalized.
    #[serde(default = "default_initial")]
    pub initial: f64,
    /// Unlimited external stock; its level never changes.
    #[serde(default)]
    pub supply: bool,
}

fn default_initial() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StationSpec {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default, rename = "reservoir")]
    pub reservoirs: Vec<ReservoirSpec>,
    /// Reservoir handed to the next stage.
    #[serde(default)]
    pub exit: Option<String>,
    /// Marks the filling station that drains the line at the demand rate.
    #[serde(default)]
    pub demand: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorSpec {
    pub name: String,
    pub station: String,
    pub kind: ActuatorKind,
    pub max_flow_lps: f64,
    pub power_nominal_kw: f64,
    #[serde(default)]
    pub power_standby_kw: f64,
    /// `"prev"`, `"inlet"`, or a reservoir of the same station.
    pub source: String,
    /// A reservoir of the same station.
    pub sink: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    /// Stations separated by `-`, parallel branches by `//`, e.g. `1-3-2//3-4`.
    pub order: String,
}

/// The plant part of a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PlantSpec {
    #[serde(default)]
    pub station: BTreeMap<String, StationSpec>,
    #[serde(default)]
    pub actuator: BTreeMap<String, ActuatorSpec>,
    #[serde(default)]
    pub sequence: Option<SequenceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reservoir {
    pub name: String,
    pub station: String,
    pub capacity: f64,
    pub initial: f64,
    pub supply: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Actuator {
    /// Instance name; duplicated stations append `#k`.
    pub name: String,
    /// Name in the station inventory, shared by all instances.
    pub base_name: String,
    pub station: String,
    pub kind: ActuatorKind,
    pub max_flow_lps: f64,
    pub power_nominal_kw: f64,
    pub power_standby_kw: f64,
    /// Empty for a system inlet.
    pub sources: Vec<usize>,
    pub sinks: Vec<usize>,
}

impl Actuator {
    pub fn is_inlet(&self) -> bool {
        self.sources.is_empty()
    }
}

/// Alternating directed graph of reservoirs and actuators. Actuator order is
/// the player order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModuleGraph {
    pub sequence: String,
    pub reservoirs: Vec<Reservoir>,
    pub actuators: Vec<Actuator>,
    pub final_buffers: Vec<usize>,
}

impl ModuleGraph {
    pub fn player_names(&self) -> Vec<String> {
        self.actuators.iter().map(|a| a.name.clone()).collect()
    }

    pub fn player_index(&self, name: &str) -> Option<usize> {
        self.actuators.iter().position(|a| a.name == name)
    }

    /// Players whose sink is a final buffer.
    pub fn is_last(&self, player: usize) -> bool {
        self.actuators[player]
            .sinks
            .iter()
            .any(|s| self.final_buffers.contains(s))
    }

    /// Source reservoirs that count as observable state (supplies excluded).
    pub fn observed_sources(&self, player: usize) -> Vec<usize> {
        self.actuators[player]
            .sources
            .iter()
            .copied()
            .filter(|&r| !self.reservoirs[r].supply)
            .collect()
    }

    /// State dimension of a player: one for its sources (if observable), one for its sinks.
    pub fn state_dim(&self, player: usize) -> usize {
        usize::from(!self.observed_sources(player).is_empty())
            + usize::from(!self.actuators[player].sinks.is_empty())
    }
}

/// Splits `1-3-2//3-4` into stages `[[1], [3], [2, 3], [4]]`.
pub fn parse_sequence(order: &str) -> Result<Vec<Vec<String>>> {
    let order = order.trim();
    if order.is_empty() {
        return Err(Error::topology("sequence", "empty production sequence"));
    }
    order
        .split('-')
        .enumerate()
        .map(|(k, stage)| {
            let members: Vec<String> = stage.split("//").map(|s| s.trim().to_string()).collect();
            if members.iter().any(String::is_empty) {
                return Err(Error::topology(
                    format!("sequence stage {}", k + 1),
                    format!("malformed stage `{stage}`"),
                ));
            }
            Ok(members)
        })
        .collect()
}

fn sorted_keys<T>(map: &BTreeMap<String, T>) -> Vec<&String> {
    let mut keys: Vec<&String> = map.keys().collect();
    keys.sort_by(|a, b| match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    });
    keys
}

/// Parses and validates the plant described by a configuration file.
pub fn load_topology(config_text: &str) -> Result<ModuleGraph> {
    let spec: PlantSpec =
        toml::from_str(config_text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
    build_graph(&spec)
}

pub fn build_graph(spec: &PlantSpec) -> Result<ModuleGraph> {
    if spec.station.is_empty() {
        return Err(Error::topology("station", "no stations defined"));
    }
    let order = spec
        .sequence
        .as_ref()
        .ok_or_else(|| Error::topology("sequence", "missing [sequence]"))?;
    let stages = parse_sequence(&order.order)?;

    for (key, act) in &spec.actuator {
        if !spec.station.contains_key(&act.station) {
            return Err(Error::topology(
                format!("actuator.{key}"),
                format!("unknown station `{}`", act.station),
            ));
        }
        if !(act.max_flow_lps >= 0.0 && act.power_nominal_kw >= 0.0 && act.power_standby_kw >= 0.0)
        {
            return Err(Error::topology(
                format!("actuator.{key}"),
                "flows and powers must be non-negative",
            ));
        }
        if act.power_standby_kw > act.power_nominal_kw {
            return Err(Error::topology(
                format!("actuator.{key}"),
                "standby power exceeds nominal power",
            ));
        }
    }

    let mut graph = ModuleGraph {
        sequence: order.order.trim().to_string(),
        reservoirs: Vec::new(),
        actuators: Vec::new(),
        final_buffers: Vec::new(),
    };
    let mut instances: HashMap<&str, usize> = HashMap::new();
    let mut prev_exits: Vec<usize> = Vec::new();
    let last_stage = stages.len() - 1;

    for (k, stage) in stages.iter().enumerate() {
        let mut exits = Vec::new();
        for id in stage {
            let loc = format!("sequence stage {} station {id}", k + 1);
            let station = spec
                .station
                .get(id)
                .ok_or_else(|| Error::topology(&loc, "station not defined"))?;
            let count = instances.entry(id.as_str()).or_insert(0);
            *count += 1;
            let suffix = if *count == 1 {
                String::new()
            } else {
                format!("#{count}")
            };

            if station.demand {
                if k != last_stage || stage.len() != 1 {
                    return Err(Error::topology(loc, "demand station must be the single last stage"));
                }
                if prev_exits.is_empty() {
                    return Err(Error::topology(loc, "demand station has nothing to drain"));
                }
                graph.final_buffers = prev_exits.clone();
                continue;
            }
            if k == last_stage {
                return Err(Error::topology(loc, "sequence must end in a demand station"));
            }

            let mut local: HashMap<&str, usize> = HashMap::new();
            for r in &station.reservoirs {
                if !(r.capacity > 0.0) || !(0.0..=1.0).contains(&r.initial) {
                    return Err(Error::topology(
                        format!("station.{id} reservoir {}", r.name),
                        "capacity must be > 0 and initial fill in [0, 1]",
                    ));
                }
                if local.insert(r.name.as_str(), graph.reservoirs.len()).is_some() {
                    return Err(Error::topology(
                        format!("station.{id}"),
                        format!("duplicate reservoir `{}`", r.name),
                    ));
                }
                graph.reservoirs.push(Reservoir {
                    name: format!("{}{suffix}", r.name),
                    station: format!("{id}{suffix}"),
                    capacity: r.capacity,
                    initial: r.initial,
                    supply: r.supply,
                });
            }

            for key in sorted_keys(&spec.actuator) {
                let act = &spec.actuator[key];
                if &act.station != id {
                    continue;
                }
                let aloc = format!("actuator.{key} ({})", act.name);
                let sources = match act.source.as_str() {
                    "inlet" => Vec::new(),
                    "prev" => {
                        if prev_exits.is_empty() {
                            return Err(Error::topology(aloc, "pulls from `prev` but has no upstream stage"));
                        }
                        prev_exits.clone()
                    }
                    name => vec![*local.get(name).ok_or_else(|| {
                        Error::topology(&aloc, format!("dangling source `{name}`"))
                    })?],
                };
                let sink = match act.sink.as_str() {
                    "prev" | "inlet" => {
                        return Err(Error::topology(aloc, "sink must be a reservoir of its station"))
                    }
                    name => *local.get(name).ok_or_else(|| {
                        Error::topology(&aloc, format!("dangling sink `{name}`"))
                    })?,
                };
                if sources.contains(&sink) {
                    return Err(Error::topology(aloc, "actuator feeds its own source"));
                }
                graph.actuators.push(Actuator {
                    name: format!("{}{suffix}", act.name),
                    base_name: act.name.clone(),
                    station: format!("{id}{suffix}"),
                    kind: act.kind,
                    max_flow_lps: act.max_flow_lps,
                    power_nominal_kw: act.power_nominal_kw,
                    power_standby_kw: act.power_standby_kw,
                    sources,
                    sinks: vec![sink],
                });
            }

            let exit_name = station.exit.as_deref().ok_or_else(|| {
                Error::topology(format!("station.{id}"), "process station needs an `exit` reservoir")
            })?;
            let exit = *local.get(exit_name).ok_or_else(|| {
                Error::topology(format!("station.{id}"), format!("dangling exit `{exit_name}`"))
            })?;
            exits.push(exit);
        }
        if !exits.is_empty() {
            prev_exits = exits;
        }
    }

    validate(&graph)?;
    Ok(graph)
}

/// Structural checks: every reservoir is wired, every actuator has a sink,
/// and material cannot circulate.
fn validate(graph: &ModuleGraph) -> Result<()> {
    if graph.actuators.is_empty() {
        return Err(Error::topology("actuator", "no actuators in the sequence"));
    }
    if graph.final_buffers.is_empty() {
        return Err(Error::topology("sequence", "no final buffer"));
    }
    let n = graph.reservoirs.len();
    let mut touched = vec![false; n];
    for a in &graph.actuators {
        for &r in a.sources.iter().chain(&a.sinks) {
            touched[r] = true;
        }
    }
    for &f in &graph.final_buffers {
        touched[f] = true;
    }
    if let Some(r) = touched.iter().position(|t| !t) {
        return Err(Error::topology(
            format!("reservoir {}", graph.reservoirs[r].name),
            "dangling reservoir with no connected actuator",
        ));
    }

    // Kahn's algorithm on the reservoir graph induced by the actuators.
    let mut indegree = vec![0usize; n];
    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    for a in &graph.actuators {
        for &s in &a.sources {
            for &t in &a.sinks {
                edges[s].push(t);
                indegree[t] += 1;
            }
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&r| indegree[r] == 0).collect();
    let mut seen = 0;
    while let Some(r) = queue.pop() {
        seen += 1;
        for &t in &edges[r] {
            indegree[t] -= 1;
            if indegree[t] == 0 {
                queue.push(t);
            }
        }
    }
    if seen != n {
        let r = (0..n).find(|&r| indegree[r] > 0).unwrap_or(0);
        return Err(Error::topology(
            format!("reservoir {}", graph.reservoirs[r].name),
            "cycle in material flow",
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::DEFAULT_BGS;

    #[test]
    fn sequence_parsing() {
        assert_eq!(
            parse_sequence("1-3-2//3-4").unwrap(),
            vec![vec!["1"], vec!["3"], vec!["2", "3"], vec!["4"]]
        );
        assert!(parse_sequence("").is_err());
        assert!(parse_sequence("1--2").is_err());
        assert!(parse_sequence("1-//2").is_err());
    }

    #[test]
    fn default_bgs_inventory() {
        let g = load_topology(DEFAULT_BGS).unwrap();
        assert_eq!(g.actuators.len(), 5);
        assert_eq!(g.reservoirs.len(), 6);
        assert_eq!(
            g.player_names(),
            ["belt_conveyor_a", "vacuum_pump_b", "vibratory_conveyor_b", "vacuum_pump_c", "rotary_feeder_c"]
        );
        assert_eq!(g.final_buffers.len(), 1);
        assert!(g.is_last(4));
        assert!(!g.is_last(3));
        assert_eq!(g.state_dim(0), 1);
        assert_eq!(g.state_dim(1), 2);
    }

    fn with_sequence(order: &str) -> String {
        DEFAULT_BGS.replace("order = \"1-2-3-4\"", &format!("order = \"{order}\""))
    }

    #[test]
    fn serial_parallel_duplicates_module_three() {
        let g = load_topology(&with_sequence("1-3-2//3-4")).unwrap();
        assert_eq!(g.actuators.len(), 7);
        let pump_c2 = g.player_index("vacuum_pump_c#2").unwrap();
        assert_eq!(g.actuators[pump_c2].base_name, "vacuum_pump_c");
        // both parallel branches feed the filling station
        assert_eq!(g.final_buffers.len(), 2);
        let feeder2 = g.player_index("rotary_feeder_c#2").unwrap();
        let vib = g.player_index("vibratory_conveyor_b").unwrap();
        assert!(g.is_last(feeder2) && g.is_last(vib));
        // the parallel stage shares module 3's exit as source
        let pump_b = g.player_index("vacuum_pump_b").unwrap();
        assert_eq!(g.actuators[pump_b].sources, g.actuators[pump_c2].sources);
    }

    #[test]
    fn parallel_merge_pulls_from_both_branches() {
        let g = load_topology(&with_sequence("1-2//3-4")).unwrap();
        assert_eq!(g.actuators.len(), 5);
        assert_eq!(g.final_buffers.len(), 2);
    }

    #[test]
    fn reordered_sequence() {
        let g = load_topology(&with_sequence("1-3-2-4")).unwrap();
        let pump_c = g.player_index("vacuum_pump_c").unwrap();
        let belt_exit = g.actuators[0].sinks[0];
        assert_eq!(g.actuators[pump_c].sources, vec![belt_exit]);
        for p in 0..g.actuators.len() {
            let fresh = load_topology(DEFAULT_BGS).unwrap();
            let q = fresh.player_index(&g.actuators[p].name).unwrap();
            assert_eq!(g.state_dim(p), fresh.state_dim(q));
        }
    }

    #[test]
    fn empty_config_is_topology_error() {
        assert!(matches!(load_topology(""), Err(Error::Topology { .. })));
    }

    #[test]
    fn unknown_station_in_sequence() {
        let err = load_topology(&with_sequence("1-9-4")).unwrap_err();
        assert!(matches!(err, Error::Topology { .. }));
        assert!(err.to_string().contains("station 9"));
    }

    #[test]
    fn must_end_in_demand_station() {
        assert!(matches!(
            load_topology(&with_sequence("1-2-3")),
            Err(Error::Topology { .. })
        ));
        assert!(matches!(
            load_topology(&with_sequence("1-4-2")),
            Err(Error::Topology { .. })
        ));
    }

    #[test]
    fn dangling_sink_is_rejected() {
        let text = DEFAULT_BGS.replace("sink = \"hopper_b\"", "sink = \"hopper_x\"");
        let err = load_topology(&text).unwrap_err();
        assert!(err.to_string().contains("dangling sink"), "{err}");
    }

    #[test]
    fn cycle_is_rejected() {
        let mut text = DEFAULT_BGS.to_string();
        text.push_str(
            r#"
[actuator.99]
name = "return_screw"
station = "2"
kind = "continuous"
max_flow_lps = 0.1
power_nominal_kw = 0.01
source = "hopper_b"
sink = "silo_b"
"#,
        );
        let err = load_topology(&text).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn dangling_reservoir_is_rejected() {
        let text = DEFAULT_BGS.replacen(
            "[[station.2.reservoir]]",
            "[[station.2.reservoir]]\nname = \"orphan\"\ncapacity = 5.0\n\n[[station.2.reservoir]]",
            1,
        );
        let err = load_topology(&text).unwrap_err();
        assert!(err.to_string().contains("orphan"), "{err}");
    }
}
