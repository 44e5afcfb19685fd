//! Discrete-time material flow and power simulation.

use serde::Serialize;

use super::topology::{ActuatorKind, ModuleGraph};
use super::utility::{constraint_terms, utility, Penalties, Utility, UtilityWeights};
use crate::error::{Error, Result};
use crate::sbpg::{Action, StateVector};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    /// Per player, kW.
    pub power_kw: Vec<f64>,
    /// Per reservoir, litres spilled this step.
    pub overflow: Vec<f64>,
    /// Litres actually moved by each actuator.
    pub moved: Vec<f64>,
    /// Litres handed to the filling station.
    pub delivered: f64,
    /// Requested minus delivered, litres.
    pub shortfall: f64,
    /// Material entering from supplies and inlets, litres.
    pub external_inflow: f64,
    /// Sum of fill changes over all non-supply reservoirs, litres.
    pub storage_change: f64,
    pub states: Vec<StateVector>,
}

impl StepOutcome {
    pub fn total_overflow(&self) -> f64 {
        self.overflow.iter().sum()
    }

    /// Inflow minus (storage change + delivery + overflow).
    pub fn mass_balance_error(&self) -> f64 {
        self.external_inflow - (self.storage_change + self.delivered + self.total_overflow())
    }
}

/// The plant state machine.
#[derive(Debug, Clone)]
pub struct Plant {
    graph: ModuleGraph,
    weights: UtilityWeights,
    /// Litres.
    fills: Vec<f64>,
    overflow_total: Vec<f64>,
}

impl Plant {
    pub fn new(graph: ModuleGraph, weights: UtilityWeights) -> Result<Self> {
        weights.validate()?;
        let fills = graph
            .reservoirs
            .iter()
            .map(|r| r.initial * r.capacity)
            .collect();
        let n = graph.reservoirs.len();
        Ok(Self {
            graph,
            weights,
            fills,
            overflow_total: vec![0.0; n],
        })
    }

    pub fn graph(&self) -> &ModuleGraph {
        &self.graph
    }

    pub fn weights(&self) -> &UtilityWeights {
        &self.weights
    }

    pub fn players(&self) -> usize {
        self.graph.actuators.len()
    }

    pub fn fills(&self) -> &[f64] {
        &self.fills
    }

    pub fn overflow_totals(&self) -> &[f64] {
        &self.overflow_total
    }

    pub fn set_fill(&mut self, reservoir: usize, litres: f64) {
        let cap = self.graph.reservoirs[reservoir].capacity;
        self.fills[reservoir] = litres.clamp(0.0, cap);
    }

    /// Restores initial fills. Overflow accumulators are kept.
    pub fn reset(&mut self) {
        for (fill, r) in self.fills.iter_mut().zip(&self.graph.reservoirs) {
            *fill = r.initial * r.capacity;
        }
    }

    pub fn normalized(&self, reservoir: usize) -> f64 {
        (self.fills[reservoir] / self.graph.reservoirs[reservoir].capacity).clamp(0.0, 1.0)
    }

    fn mean_normalized(&self, reservoirs: &[usize]) -> f64 {
        reservoirs.iter().map(|&r| self.normalized(r)).sum::<f64>() / reservoirs.len() as f64
    }

    /// `[mean source fill, mean sink fill]`, omitting unobservable parts.
    pub fn player_state(&self, player: usize) -> StateVector {
        let sources = self.graph.observed_sources(player);
        let sinks = &self.graph.actuators[player].sinks;
        let mut values = Vec::with_capacity(2);
        if !sources.is_empty() {
            values.push(self.mean_normalized(&sources));
        }
        if !sinks.is_empty() {
            values.push(self.mean_normalized(sinks));
        }
        StateVector::clamped(values)
    }

    pub fn player_states(&self) -> Vec<StateVector> {
        (0..self.players()).map(|p| self.player_state(p)).collect()
    }

    /// Lowest sink fill (guarded against emptiness) and highest observed
    /// source fill (guarded against overflow) of a player.
    pub fn guarded_levels(&self, player: usize) -> (Option<f64>, Option<f64>) {
        let low = self.graph.actuators[player]
            .sinks
            .iter()
            .map(|&r| self.normalized(r))
            .reduce(f64::min);
        let high = self
            .graph
            .observed_sources(player)
            .iter()
            .map(|&r| self.normalized(r))
            .reduce(f64::max);
        (low, high)
    }

    fn effective_action(kind: ActuatorKind, a: f64) -> f64 {
        match kind {
            ActuatorKind::Continuous | ActuatorKind::Duration => a.clamp(0.0, 1.0),
            ActuatorKind::Binary => {
                if a >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn step(&mut self, joint_action: &[Action]) -> Result<StepOutcome> {
        let n_act = self.graph.actuators.len();
        if joint_action.len() != n_act {
            return Err(Error::config(format!(
                "expected {n_act} actions, got {}",
                joint_action.len()
            )));
        }
        let dt = self.weights.dt;
        let n_res = self.graph.reservoirs.len();
        let before: f64 = self.stored();

        let effective: Vec<f64> = self
            .graph
            .actuators
            .iter()
            .zip(joint_action)
            .map(|(a, x)| Self::effective_action(a.kind, x.value()))
            .collect();

        // Requests are split evenly over an actuator's sources and scaled
        // down where a reservoir cannot serve all of them.
        let mut requested = vec![0.0; n_res];
        for (act, &eff) in self.graph.actuators.iter().zip(&effective) {
            let want = eff * act.max_flow_lps * dt;
            for &s in &act.sources {
                requested[s] += want / act.sources.len() as f64;
            }
        }
        let scale: Vec<f64> = (0..n_res)
            .map(|r| {
                if self.graph.reservoirs[r].supply || requested[r] <= self.fills[r] {
                    1.0
                } else {
                    self.fills[r] / requested[r]
                }
            })
            .collect();

        let mut external_inflow = 0.0;
        let mut moved = vec![0.0; n_act];
        for (k, (act, &eff)) in self.graph.actuators.iter().zip(&effective).enumerate() {
            let want = eff * act.max_flow_lps * dt;
            if act.is_inlet() {
                moved[k] = want;
                external_inflow += want;
                continue;
            }
            let share = want / act.sources.len() as f64;
            for &s in &act.sources {
                let take = share * scale[s];
                moved[k] += take;
                if self.graph.reservoirs[s].supply {
                    external_inflow += take;
                }
            }
        }
        for (k, act) in self.graph.actuators.iter().enumerate() {
            for &s in &act.sources {
                if !self.graph.reservoirs[s].supply {
                    let share = effective[k] * act.max_flow_lps * dt / act.sources.len() as f64;
                    self.fills[s] = (self.fills[s] - share * scale[s]).max(0.0);
                }
            }
        }

        let mut overflow = vec![0.0; n_res];
        for (k, act) in self.graph.actuators.iter().enumerate() {
            let portion = moved[k] / act.sinks.len() as f64;
            for &t in &act.sinks {
                if self.graph.reservoirs[t].supply {
                    // a full supply stock absorbs nothing
                    overflow[t] += portion;
                    continue;
                }
                self.fills[t] += portion;
            }
        }
        for r in 0..n_res {
            let cap = self.graph.reservoirs[r].capacity;
            if !self.graph.reservoirs[r].supply && self.fills[r] > cap {
                overflow[r] += self.fills[r] - cap;
                self.fills[r] = cap;
            }
            self.overflow_total[r] += overflow[r];
        }

        // Filling station draws from its buffers in proportion to their content.
        let request = self.weights.demand_lps * dt;
        let available: f64 = self
            .graph
            .final_buffers
            .iter()
            .map(|&b| self.fills[b])
            .sum();
        let delivered = request.min(available);
        if delivered > 0.0 {
            let mut remaining = delivered;
            let last = self.graph.final_buffers.len() - 1;
            for (i, &b) in self.graph.final_buffers.iter().enumerate() {
                let take = if i == last {
                    remaining.min(self.fills[b])
                } else {
                    delivered * self.fills[b] / available
                };
                self.fills[b] -= take;
                remaining -= take;
            }
        }

        let power_kw = self
            .graph
            .actuators
            .iter()
            .zip(&effective)
            .map(|(a, &eff)| a.power_standby_kw + eff * (a.power_nominal_kw - a.power_standby_kw))
            .collect();

        let after = self.stored();
        Ok(StepOutcome {
            power_kw,
            overflow,
            moved,
            delivered,
            shortfall: (request - delivered).max(0.0),
            external_inflow,
            storage_change: after - before,
            states: self.player_states(),
        })
    }

    fn stored(&self) -> f64 {
        self.fills
            .iter()
            .zip(&self.graph.reservoirs)
            .filter(|(_, r)| !r.supply)
            .map(|(f, _)| f)
            .sum()
    }
}

/// Per-player signals gathered over one adaptation interval.
#[derive(Debug, Clone)]
pub struct IntervalAccumulator {
    steps: usize,
    energy_kws: Vec<f64>,
    low: Vec<Vec<f64>>,
    high: Vec<Vec<f64>>,
    overflow: f64,
    shortfall: f64,
    delivered: f64,
}

/// Aggregated interval signals and resulting utilities.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSummary {
    pub duration_s: f64,
    pub penalties: Vec<Penalties>,
    pub utilities: Vec<Utility>,
    /// Mean power per player, kW.
    pub power_kw: Vec<f64>,
    /// Litres spilled over the interval.
    pub overflow: f64,
    /// Litres of unmet demand over the interval.
    pub shortfall: f64,
    pub delivered: f64,
}

impl IntervalSummary {
    pub fn raw_utilities(&self) -> Vec<f64> {
        self.utilities.iter().map(|u| u.value).collect()
    }

    pub fn total_power_kw(&self) -> f64 {
        self.power_kw.iter().sum()
    }

    /// Signed demand deviation rate, L/s (negative when short).
    pub fn demand_deviation_lps(&self) -> f64 {
        -self.shortfall / self.duration_s
    }

    pub fn overflow_lps(&self) -> f64 {
        self.overflow / self.duration_s
    }
}

impl IntervalAccumulator {
    pub fn new(players: usize) -> Self {
        Self {
            steps: 0,
            energy_kws: vec![0.0; players],
            low: vec![Vec::new(); players],
            high: vec![Vec::new(); players],
            overflow: 0.0,
            shortfall: 0.0,
            delivered: 0.0,
        }
    }

    pub fn clear(&mut self) {
        self.steps = 0;
        self.energy_kws.iter_mut().for_each(|e| *e = 0.0);
        self.low.iter_mut().for_each(Vec::clear);
        self.high.iter_mut().for_each(Vec::clear);
        self.overflow = 0.0;
        self.shortfall = 0.0;
        self.delivered = 0.0;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Adds one step; guarded levels are read from the plant after the step.
    pub fn record(&mut self, plant: &Plant, outcome: &StepOutcome) {
        let dt = plant.weights().dt;
        for p in 0..self.energy_kws.len() {
            self.energy_kws[p] += outcome.power_kw[p] * dt;
            let (low, high) = plant.guarded_levels(p);
            if let Some(l) = low {
                self.low[p].push(l);
            }
            if let Some(h) = high {
                self.high[p].push(h);
            }
        }
        self.overflow += outcome.total_overflow();
        self.shortfall += outcome.shortfall;
        self.delivered += outcome.delivered;
        self.steps += 1;
    }

    pub fn summarize(&self, plant: &Plant) -> IntervalSummary {
        let w = plant.weights();
        let duration = self.steps.max(1) as f64 * w.dt;
        let power_kw: Vec<f64> = self.energy_kws.iter().map(|e| e / duration).collect();
        let penalties: Vec<Penalties> = (0..self.energy_kws.len())
            .map(|p| {
                let (l_p, l_s) = constraint_terms(&self.low[p], &self.high[p], w, w.dt);
                Penalties {
                    l_p,
                    l_s,
                    power: power_kw[p],
                    v_d: -self.shortfall,
                }
            })
            .collect();
        let utilities = penalties
            .iter()
            .enumerate()
            .map(|(p, pen)| utility(pen, plant.graph().is_last(p), w))
            .collect();
        IntervalSummary {
            duration_s: duration,
            penalties,
            utilities,
            power_kw,
            overflow: self.overflow,
            shortfall: self.shortfall,
            delivered: self.delivered,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{load_topology, utility::demand_term, DEFAULT_BGS};

    fn plant() -> Plant {
        Plant::new(load_topology(DEFAULT_BGS).unwrap(), UtilityWeights::default()).unwrap()
    }

    fn actions(v: &[f64]) -> Vec<Action> {
        v.iter().map(|&x| Action::clamped(x)).collect()
    }

    #[test]
    fn idle_plant_only_drains_demand() {
        let mut p = plant();
        let before = p.fills().to_vec();
        let out = p.step(&actions(&[0.0; 5])).unwrap();
        assert!(out.power_kw.iter().all(|&w| w == 0.0));
        assert!(out.moved.iter().all(|&m| m == 0.0));
        let final_buffer = p.graph().final_buffers[0];
        for r in 0..before.len() {
            if r == final_buffer {
                assert!((before[r] - p.fills()[r] - 0.125).abs() < 1e-12);
            } else {
                assert_eq!(before[r], p.fills()[r]);
            }
        }
    }

    #[test]
    fn zero_action_fixed_point_without_demand() {
        let mut w = UtilityWeights::default();
        w.demand_lps = 0.0;
        let mut p = Plant::new(load_topology(DEFAULT_BGS).unwrap(), w).unwrap();
        let before = p.fills().to_vec();
        for _ in 0..100 {
            p.step(&actions(&[0.0; 5])).unwrap();
        }
        assert_eq!(before, p.fills());
    }

    #[test]
    fn empty_source_limits_flow() {
        let mut p = plant();
        let hopper_a = p.graph().actuators[1].sources[0];
        p.set_fill(hopper_a, 0.05);
        let out = p.step(&actions(&[0.0, 1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!((out.moved[1] - 0.05).abs() < 1e-12);
        assert_eq!(p.fills()[hopper_a], 0.0);
    }

    #[test]
    fn full_sink_overflows() {
        let mut p = plant();
        let silo_b = p.graph().actuators[1].sinks[0];
        let cap = p.graph().reservoirs[silo_b].capacity;
        p.set_fill(silo_b, cap);
        // duty cycle 0.4 of a 0.5 L/s pump delivers 0.2 L into a full silo
        let out = p.step(&actions(&[0.0, 0.4, 0.0, 0.0, 0.0])).unwrap();
        assert!((out.overflow[silo_b] - 0.2).abs() < 1e-12);
        assert_eq!(p.fills()[silo_b], cap);
        assert!(out.mass_balance_error().abs() < 1e-12);
    }

    #[test]
    fn binary_actuator_switches_at_half() {
        let mut p = plant();
        let lo = p.step(&actions(&[0.0, 0.0, 0.49, 0.0, 0.0])).unwrap();
        assert_eq!(lo.power_kw[2], 0.0);
        let hi = p.step(&actions(&[0.0, 0.0, 0.5, 0.0, 0.0])).unwrap();
        assert_eq!(hi.power_kw[2], 0.063);
        assert!((hi.moved[2] - 0.30).abs() < 1e-12);
    }

    #[test]
    fn action_count_mismatch() {
        let mut p = plant();
        assert!(matches!(p.step(&actions(&[0.0; 4])), Err(Error::Config(_))));
    }

    #[test]
    fn shortfall_matches_demand_term_from_empty_buffer() {
        let mut p = plant();
        let fb = p.graph().final_buffers[0];
        p.set_fill(fb, 0.0);
        let silo_c = p.graph().actuators[4].sources[0];
        p.set_fill(silo_c, 10.0);
        // feeder at 0.2 -> 0.06 L/s inflow against 0.125 L/s demand
        let out = p.step(&actions(&[0.0, 0.0, 0.0, 0.0, 0.2])).unwrap();
        let expected = demand_term(0.0, 0.125, 0.06, 1.0);
        assert!((out.shortfall - expected).abs() < 1e-12);
        assert!((expected - 0.065).abs() < 1e-12);
    }

    #[test]
    fn interval_utilities() {
        let mut p = plant();
        let mut acc = IntervalAccumulator::new(5);
        for _ in 0..10 {
            let out = p.step(&actions(&[0.0; 5])).unwrap();
            acc.record(&p, &out);
        }
        let s = acc.summarize(&p);
        assert_eq!(s.duration_s, 10.0);
        // nothing moves, no limits crossed, buffer still holds material
        for u in &s.utilities {
            assert_eq!(u.value, 3.0);
        }
        assert_eq!(s.shortfall, 0.0);
    }
}
