//! Bulk good production line: topology, flow dynamics and utilities.

mod sim;
mod topology;
mod utility;

pub use sim::{IntervalAccumulator, IntervalSummary, Plant, StepOutcome};
pub use topology::{
    build_graph, load_topology, parse_sequence, Actuator, ActuatorKind, ActuatorSpec,
    ModuleGraph, PlantSpec, Reservoir, ReservoirSpec, SequenceSpec, StationSpec,
};
pub use utility::{
    constraint_terms, demand_term, potential, utility, utility_bgs, utility_lsbgs, Penalties,
    Utility, UtilityForm, UtilityWeights, DEMAND_DENOMINATOR_FLOOR,
};

/// Default four-module bulk good system.
pub const DEFAULT_BGS: &str = include_str!("../../configs/bgs_default.toml");

/// Larger eight-module line with fifteen actuators.
pub const DEFAULT_LSBGS: &str = include_str!("../../configs/lsbgs_default.toml");
