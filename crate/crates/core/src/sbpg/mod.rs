//! Best-response learners over discretized performance maps.

mod agent;
mod map;
mod schedule;

pub use agent::{player_rng, PlayerAgent};
pub use map::{
    bin_center, discretize, Action, Cell, DiscretizedIndex, PerformanceMap, StateVector,
    IDW_DELTA,
};
pub use schedule::DecaySchedule;
