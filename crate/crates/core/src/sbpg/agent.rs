use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::map::{Action, DiscretizedIndex, PerformanceMap, StateVector};
use super::schedule::DecaySchedule;
use crate::error::{Error, Result};
use crate::transfer::VisitHistogram;

/// Random stream for one player, keyed by its name so that adding or removing
/// other players leaves it untouched.
pub fn player_rng(master_seed: u64, player: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(fnv1a(player.as_bytes()));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// A single actuator acting as a best-response learner.
#[derive(Debug, Clone)]
pub struct PlayerAgent {
    name: String,
    map: PerformanceMap,
    epsilon: f64,
    history: VecDeque<f64>,
    history_cap: usize,
    visits: VisitHistogram,
    rng: ChaCha8Rng,
}

impl PlayerAgent {
    pub fn new(
        name: impl Into<String>,
        map: PerformanceMap,
        epsilon: f64,
        history_cap: usize,
        rng: ChaCha8Rng,
    ) -> Self {
        let visits = VisitHistogram::new(map.dim(), map.bins_per_dim());
        Self {
            name: name.into(),
            map,
            epsilon: epsilon.clamp(0.0, 1.0),
            history: VecDeque::with_capacity(history_cap.max(1)),
            history_cap: history_cap.max(1),
            visits,
            rng,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn map(&self) -> &PerformanceMap {
        &self.map
    }

    pub fn into_map(self) -> PerformanceMap {
        self.map
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon.clamp(0.0, 1.0);
    }

    pub fn visits(&self) -> &VisitHistogram {
        &self.visits
    }

    /// Communicated actions, oldest first.
    pub fn history(&self) -> &VecDeque<f64> {
        &self.history
    }

    pub fn index_of(&self, state: &StateVector) -> Result<DiscretizedIndex> {
        self.map.index_of(state)
    }

    /// Epsilon-greedy choice between a uniform random action and the
    /// interpolated best response. An empty map always explores.
    pub fn select_action(&mut self, state: &StateVector) -> Result<(Action, bool)> {
        let roll: f64 = self.rng.gen();
        if roll < self.epsilon {
            return Ok((self.explore(), true));
        }
        match self.map.interpolate(state) {
            Ok(action) => Ok((action, false)),
            Err(Error::NoKnowledge) => Ok((self.explore(), true)),
            Err(e) => Err(e),
        }
    }

    fn explore(&mut self) -> Action {
        Action::clamped(self.rng.gen::<f64>())
    }

    pub fn update_map(&mut self, state: &StateVector, action: Action, utility: f64) -> Result<bool> {
        self.map.update(state, action, utility)
    }

    pub fn record_visit(&mut self, index: &DiscretizedIndex) -> Result<()> {
        self.visits.record(index)
    }

    pub fn push_action(&mut self, action: Action) {
        if self.history.len() == self.history_cap {
            self.history.pop_front();
        }
        self.history.push_back(action.value());
    }

    /// Moves epsilon to the schedule value for `step`, never upwards.
    pub fn decay_epsilon(&mut self, step: u64, schedule: &DecaySchedule) -> f64 {
        self.epsilon = self.epsilon.min(schedule.value(step));
        self.epsilon
    }
}
