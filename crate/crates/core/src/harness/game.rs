use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::report::{EpisodeSummary, MetricsRow, RunReport, TransferRecord};
use crate::config::ExperimentConfig;
use crate::env::{IntervalAccumulator, Plant};
use crate::error::{Error, Result};
use crate::rbf::{
    fit_latent, latent_loss, samples_from_map, similarity_matrix, utility_with_latent,
    LatentHistory, RbfConfig,
};
use crate::sbpg::{player_rng, Action, DecaySchedule, PerformanceMap, PlayerAgent, StateVector};
use crate::transfer::{
    alpha_tf, modified_utility, mom_loss, sw_loss, MomState, PairSelection, TransferPlan, Variant,
    VisitDistribution,
};

/// Knobs beyond the config file.
#[derive(Default)]
pub struct RunOptions<'a> {
    /// Overrides the configured episode count; zero is allowed here.
    pub episodes: Option<usize>,
    /// Overrides the configured initial exploration rate.
    pub eps0: Option<f64>,
    /// Maps to start from, keyed by player name or base actuator name.
    pub initial_maps: Option<BTreeMap<String, PerformanceMap>>,
    /// Run one greedy episode without map writes after training.
    pub greedy_evaluation: bool,
    /// Receives one JSON line per player and adaptation step.
    pub journal: Option<&'a mut dyn Write>,
}

/// Trains all players from scratch as configured.
pub fn train(config: &ExperimentConfig) -> Result<RunReport> {
    run(config, RunOptions::default())
}

/// Reuses stored maps on the configured topology: optional retraining,
/// then one greedy evaluation episode.
///
/// Players missing from `maps` take the map of their base actuator, so a
/// duplicated module starts from its donor's policy.
pub fn evaluate(
    config: &ExperimentConfig,
    maps: BTreeMap<String, PerformanceMap>,
    retrain_episodes: usize,
    retrain_eps0: Option<f64>,
) -> Result<RunReport> {
    run(
        config,
        RunOptions {
            episodes: Some(retrain_episodes),
            eps0: retrain_eps0,
            initial_maps: Some(maps),
            greedy_evaluation: true,
            journal: None,
        },
    )
}

pub fn run(config: &ExperimentConfig, options: RunOptions<'_>) -> Result<RunReport> {
    config.validate()?;
    let graph = config.graph()?;
    let plan = config.transfer_plan(&graph)?;
    let episodes = options.episodes.unwrap_or(config.run.episodes);
    let eps0 = options.eps0.unwrap_or(config.decay.eps0);
    let total = config.run.adaptations_per_episode() * episodes as u64;
    let schedule = DecaySchedule::reaching_floor_at(
        eps0,
        config.decay.eps_min.min(eps0),
        total.max(1),
        config.decay.floor_fraction,
    )?;

    let bins = config.run.bins;
    let names = graph.player_names();
    let mut agents = Vec::with_capacity(names.len());
    let mut rbf = Vec::with_capacity(names.len());
    for (p, name) in names.iter().enumerate() {
        let dim = graph.state_dim(p);
        let map = match &options.initial_maps {
            None => PerformanceMap::new(dim, bins)?,
            Some(maps) => {
                let base = &graph.actuators[p].base_name;
                let map = maps
                    .get(name)
                    .or_else(|| maps.get(base))
                    .ok_or_else(|| Error::PolicyLoad(format!("no map for player `{name}`")))?;
                if map.dim() != dim || map.bins_per_dim() != bins {
                    return Err(Error::PolicyLoad(format!(
                        "map for `{name}` is {}-d with {} bins, player needs {dim}-d with {bins}",
                        map.dim(),
                        map.bins_per_dim()
                    )));
                }
                map.clone()
            }
        };
        let history = plan.horizon.max(1);
        agents.push(PlayerAgent::new(
            name.clone(),
            map,
            eps0,
            history,
            player_rng(config.run.seed, name),
        ));
        rbf.push(config.rbf.for_dim(dim)?);
    }

    let plant = Plant::new(graph, config.utility)?;
    let mut session = Session {
        config,
        latents: vec![LatentHistory::new(plan.horizon.max(1)); names.len()],
        plant,
        agents,
        plan,
        schedule,
        names,
        mom: BTreeMap::new(),
        rbf,
        adaptation: 0,
        global_step: 0,
        trace: Vec::new(),
        metrics: Vec::new(),
        journal: options.journal,
    };

    let mut summaries = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        summaries.push(session.run_episode(episode, true)?);
    }
    let evaluation = if options.greedy_evaluation {
        for agent in &mut session.agents {
            agent.set_epsilon(0.0);
        }
        Some(session.run_episode(episodes, false)?)
    } else {
        None
    };
    if let Some(journal) = session.journal.as_mut() {
        journal.flush()?;
    }

    let final_potential = summaries
        .last()
        .or(evaluation.as_ref())
        .map_or(0.0, |s| s.potential);
    let pairs = session
        .plan
        .pairs
        .iter()
        .map(|&(i, j)| (session.names[i].clone(), session.names[j].clone()))
        .collect();
    let maps = session
        .agents
        .iter()
        .map(|a| (a.name().to_string(), a.map().clone()))
        .collect();
    Ok(RunReport {
        variant: session.plan.variant,
        seed: config.run.seed,
        sequence: session.plant.graph().sequence.clone(),
        players: session.names,
        episodes: summaries,
        final_potential,
        maps,
        trace: session.trace,
        metrics: session.metrics,
        pairs,
        evaluation,
    })
}

#[derive(Serialize)]
struct JournalLine<'a> {
    step: u64,
    episode: usize,
    player: &'a str,
    epsilon: f64,
    alpha_tf: f64,
    loss: f64,
    utility: f64,
    modified_utility: f64,
}

struct Session<'c, 'j> {
    config: &'c ExperimentConfig,
    plant: Plant,
    agents: Vec<PlayerAgent>,
    plan: TransferPlan,
    schedule: DecaySchedule,
    names: Vec<String>,
    /// Momentum state per ordered (player, partner).
    mom: BTreeMap<(usize, usize), MomState>,
    latents: Vec<LatentHistory>,
    rbf: Vec<RbfConfig>,
    /// Adaptation steps taken over the whole run.
    adaptation: u64,
    global_step: u64,
    trace: Vec<TransferRecord>,
    metrics: Vec<MetricsRow>,
    journal: Option<&'j mut dyn Write>,
}

impl Session<'_, '_> {
    fn run_episode(&mut self, episode: usize, learn: bool) -> Result<EpisodeSummary> {
        let run = &self.config.run;
        let (steps, interval) = (run.steps_per_episode, run.adaptation_interval);
        let per_episode = run.adaptations_per_episode();
        let n = self.agents.len();

        self.plant.reset();
        let mut acc = IntervalAccumulator::new(n);
        let mut states = self.plant.player_states();
        let mut actions = Vec::with_capacity(n);
        for (agent, state) in self.agents.iter_mut().zip(&states) {
            let (a, _) = agent.select_action(state)?;
            agent.push_action(a);
            actions.push(a);
        }

        let mut energy = 0.0;
        let mut overflow = 0.0;
        let mut shortfall = 0.0;
        let mut potential_sum = 0.0;
        let mut clamped = 0;
        let mut k = 0;
        for s in 0..steps {
            let outcome = self.plant.step(&actions)?;
            acc.record(&self.plant, &outcome);
            self.global_step += 1;
            if (s + 1) % interval != 0 {
                continue;
            }
            let summary = acc.summarize(&self.plant);
            acc.clear();
            k += 1;
            let raw = summary.raw_utilities();
            let potential: f64 = raw.iter().sum();
            energy += summary.total_power_kw() * summary.duration_s;
            overflow += summary.overflow;
            shortfall += summary.shortfall;
            potential_sum += potential;
            clamped += summary.utilities.iter().filter(|u| u.demand_clamped).count();

            if learn {
                self.adapt(episode, &states, &actions, &raw)?;
                self.metrics.push(MetricsRow {
                    step: self.global_step,
                    episode,
                    power_kw: summary.power_kw.clone(),
                    overflow_lps: summary.overflow_lps(),
                    demand_deviation_lps: summary.demand_deviation_lps(),
                    utilities: raw,
                    potential,
                });
            }

            let next = self.plant.player_states();
            if k < per_episode {
                for (p, agent) in self.agents.iter_mut().enumerate() {
                    let (a, _) = agent.select_action(&next[p])?;
                    agent.push_action(a);
                    actions[p] = a;
                }
            }
            if learn {
                self.adaptation += 1;
                for agent in &mut self.agents {
                    agent.decay_epsilon(self.adaptation, &self.schedule);
                }
            }
            states = next;
        }

        let duration = steps as f64 * self.plant.weights().dt;
        Ok(EpisodeSummary {
            episode,
            power_kw: energy / duration,
            overflow_lps: overflow / duration,
            demand_deviation_lps: -shortfall / duration,
            potential: potential_sum / k.max(1) as f64,
            demand_clamped: clamped,
        })
    }

    /// One adaptation: visits, transfer weights and losses, map updates.
    fn adapt(
        &mut self,
        episode: usize,
        states: &[StateVector],
        actions: &[Action],
        raw: &[f64],
    ) -> Result<()> {
        let t = self.adaptation;
        let n = self.agents.len();
        let variant = self.plan.variant;

        if let PairSelection::Rbf {
            at_adaptation,
            top_k,
        } = self.plan.selection
        {
            if t == at_adaptation && self.plan.pairs.is_empty() {
                self.select_pairs(top_k)?;
            }
        }
        if variant == Variant::Rbf && t.is_multiple_of(self.config.rbf.update_interval.max(1)) {
            for p in 0..n {
                if self.plan.involves(p) {
                    self.refit(p, t)?;
                }
            }
        }

        for (agent, state) in self.agents.iter_mut().zip(states) {
            let index = agent.index_of(state)?;
            agent.record_visit(&index)?;
        }
        if variant == Variant::Baseline || self.plan.pairs.is_empty() {
            for p in 0..n {
                self.log(episode, p, 0.0, 0.0, raw[p], raw[p])?;
                self.agents[p].update_map(&states[p], actions[p], raw[p])?;
            }
            return Ok(());
        }

        let distributions: Vec<Option<VisitDistribution>> = (0..n)
            .map(|p| self.plan.involves(p).then(|| self.agents[p].visits().distribution()))
            .collect();
        let histories: Vec<Vec<f64>> = if variant == Variant::Sw {
            self.agents
                .iter()
                .map(|a| a.history().iter().copied().collect())
                .collect()
        } else {
            Vec::new()
        };

        for p in 0..n {
            let u = raw[p];
            let partners: Vec<usize> = self.plan.partners(p).collect();
            if partners.is_empty() {
                self.log(episode, p, 0.0, 0.0, u, u)?;
                self.agents[p].update_map(&states[p], actions[p], u)?;
                continue;
            }
            let epsilon = self.agents[p].epsilon();
            let first_record = self.trace.len();
            let mut alphas = Vec::with_capacity(partners.len());
            let mut losses = Vec::with_capacity(partners.len());
            for &q in &partners {
                let mine = distributions[p].as_ref().expect("involved player");
                let theirs = distributions[q].as_ref().expect("involved partner");
                let weight = alpha_tf(epsilon, self.plan.beta_tf, mine, theirs)?;
                let loss = match variant {
                    Variant::Sw => sw_loss(&histories[p], &histories[q], self.plan.horizon)?,
                    Variant::Mom => mom_loss(
                        self.mom.entry((p, q)).or_default(),
                        actions[p].value(),
                        actions[q].value(),
                        self.plan.alpha_mom,
                        t,
                    )?,
                    Variant::Rbf => latent_loss(&self.latents[p], &self.latents[q], self.plan.horizon)?,
                    Variant::Baseline => 0.0,
                };
                alphas.push(weight.alpha);
                losses.push(loss);
                self.trace.push(TransferRecord {
                    step: self.global_step,
                    episode,
                    player: self.names[p].clone(),
                    partner: self.names[q].clone(),
                    epsilon,
                    beta_tf: self.plan.beta_tf,
                    divergence: weight.divergence,
                    alpha_tf: weight.alpha,
                    loss,
                    utility: u,
                    modified_utility: u,
                });
            }
            let modified = if variant == Variant::Rbf {
                utility_with_latent(u, &alphas, &losses, n)?
            } else {
                alphas
                    .iter()
                    .zip(&losses)
                    .fold(u, |acc, (&a, &l)| modified_utility(acc, a, l))
            };
            for record in &mut self.trace[first_record..] {
                record.modified_utility = modified;
            }
            let alpha_sum = alphas.iter().sum();
            let loss_sum = losses.iter().sum();
            self.log(episode, p, alpha_sum, loss_sum, u, modified)?;
            self.agents[p].update_map(&states[p], actions[p], modified)?;
        }
        Ok(())
    }

    fn refit(&mut self, p: usize, t: u64) -> Result<()> {
        let samples = samples_from_map(self.agents[p].map());
        match fit_latent(&samples, &self.rbf[p], t) {
            Ok(latent) => {
                self.latents[p].push(latent);
                Ok(())
            }
            Err(Error::EmptyFit) => Ok(()),
            Err(e) => Err(e),
        }
    }

    /// Fits every player's latent and keeps the `top_k` most similar pairs.
    fn select_pairs(&mut self, top_k: usize) -> Result<()> {
        let mut fitted = Vec::new();
        let mut owners = Vec::new();
        for p in 0..self.agents.len() {
            let samples = samples_from_map(self.agents[p].map());
            match fit_latent(&samples, &self.rbf[p], self.adaptation) {
                Ok(latent) => {
                    fitted.push(latent);
                    owners.push(p);
                }
                Err(Error::EmptyFit) => {}
                Err(e) => return Err(e),
            }
        }
        let matrix = similarity_matrix(&fitted);
        self.plan.pairs = matrix
            .ranked
            .iter()
            .take(top_k)
            .map(|&(i, j, _)| (owners[i], owners[j]))
            .collect();
        self.plan.validate(self.agents.len())
    }

    fn log(
        &mut self,
        episode: usize,
        p: usize,
        alpha: f64,
        loss: f64,
        utility: f64,
        modified: f64,
    ) -> Result<()> {
        if let Some(journal) = self.journal.as_mut() {
            let line = JournalLine {
                step: self.global_step,
                episode,
                player: &self.names[p],
                epsilon: self.agents[p].epsilon(),
                alpha_tf: alpha,
                loss,
                utility,
                modified_utility: modified,
            };
            serde_json::to_writer(&mut **journal, &line).map_err(std::io::Error::from)?;
            journal.write_all(b"\n")?;
        }
        Ok(())
    }
}
