//! Independent numerical checks: symmetry of mixed partials of pair losses,
//! exact potential-game residuals, brute-force Nash equilibria and
//! certification of sequential best-response dynamics on tiny games.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::transfer::{mom_loss, sw_loss, MomState};

/// Finite-difference symmetry tolerance at `h = 1e-4`.
pub const CROSS_PARTIAL_TOL: f64 = 1e-6;
/// Residual tolerance for exact enumeration.
pub const ENUMERATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl ConditionCheck {
    /// Passes when `value < tolerance`.
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value < tolerance,
        }
    }

    /// Passes when `|value - target| <= tolerance`.
    pub fn near(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: (value - target).abs() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ConditionReport {
    /// Largest `|d2 U_i/da_i da_j - d2 U_j/da_j da_i|` seen.
    pub max_cross_asymmetry: f64,
    /// Largest `|dU_i - d(phi)|` over unilateral deviations.
    pub max_pg_residual: f64,
    pub samples: usize,
    /// Smallest and largest mixed partial of the player-i loss.
    pub mixed_partial_min: f64,
    pub mixed_partial_max: f64,
    pub checks: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,value,tolerance,passed\n");
        for c in &self.checks {
            writeln!(out, "{},{},{},{}", c.name, c.value, c.tolerance, c.passed).ok();
        }
        out
    }
}

/// Central-difference estimate of `d2 f / dx dy`.
pub fn mixed_partial(f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64, h: f64) -> f64 {
    (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h)
}

/// Compares the cross partials that player `i` and player `j` see when both
/// carry the same pair loss, `loss(a_i, a_j)` for `i` and `loss(a_j, a_i)`
/// for `j`. Points are drawn from `[h, 1 - h]`.
pub fn check_cross_partials(
    loss: &dyn Fn(f64, f64) -> f64,
    samples: usize,
    h: f64,
    seed: u64,
) -> ConditionReport {
    let h = h.clamp(1e-6, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let swapped = |x: f64, y: f64| loss(y, x);
    let mut report = ConditionReport {
        samples,
        mixed_partial_min: f64::INFINITY,
        mixed_partial_max: f64::NEG_INFINITY,
        ..ConditionReport::default()
    };
    for _ in 0..samples {
        let ai = rng.gen_range(h..=1.0 - h);
        let aj = rng.gen_range(h..=1.0 - h);
        let for_i = mixed_partial(loss, ai, aj, h);
        // player j's own action is its first argument
        let for_j = mixed_partial(&swapped, ai, aj, h);
        report.max_cross_asymmetry = report.max_cross_asymmetry.max((for_i - for_j).abs());
        report.mixed_partial_min = report.mixed_partial_min.min(for_i);
        report.mixed_partial_max = report.mixed_partial_max.max(for_i);
    }
    report.checks.push(ConditionCheck::below(
        "cross_partial_symmetry",
        report.max_cross_asymmetry,
        CROSS_PARTIAL_TOL,
    ));
    report
}

/// Sliding-window loss as a function of the current pair of actions, with
/// earlier window entries drawn once from `seed`.
pub fn sw_pair_loss(horizon: usize, seed: u64) -> impl Fn(f64, f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let past_i: Vec<f64> = (1..horizon).map(|_| rng.gen()).collect();
    let past_j: Vec<f64> = (1..horizon).map(|_| rng.gen()).collect();
    move |ai, aj| {
        let mut hi = past_i.clone();
        let mut hj = past_j.clone();
        hi.push(ai);
        hj.push(aj);
        sw_loss(&hi, &hj, horizon).expect("valid window")
    }
}

/// Momentum loss at a non-initial step as a function of the current actions.
pub fn mom_pair_loss(alpha_mom: f64, h_prev: f64) -> impl Fn(f64, f64) -> f64 {
    move |ai, aj| {
        let mut state = MomState {
            h_prev,
            initialized: true,
        };
        mom_loss(&mut state, ai, aj, alpha_mom, 1).expect("valid alpha")
    }
}

/// True when a state-parametrized pair loss gives the same value in every
/// sampled state.
pub fn is_state_free(
    loss: &dyn Fn(&[f64], f64, f64) -> f64,
    state_dim: usize,
    samples: usize,
    seed: u64,
) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples).all(|_| {
        let ai: f64 = rng.gen();
        let aj: f64 = rng.gen();
        let s1: Vec<f64> = (0..state_dim).map(|_| rng.gen()).collect();
        let s2: Vec<f64> = (0..state_dim).map(|_| rng.gen()).collect();
        loss(&s1, ai, aj) == loss(&s2, ai, aj)
    })
}

type UtilityFn = Box<dyn Fn(usize, usize, &[f64]) -> f64 + Send + Sync>;
type TransitionFn = Box<dyn Fn(usize, &[f64]) -> usize + Send + Sync>;

/// A small, fully enumerable game.
pub struct TinyGame {
    /// Action levels per player.
    pub levels: Vec<Vec<f64>>,
    /// `utility(player, state, joint_action)`.
    pub utility: UtilityFn,
    pub states: usize,
    pub transition: Option<TransitionFn>,
}

impl TinyGame {
    pub fn new(levels: Vec<Vec<f64>>, utility: UtilityFn) -> Self {
        assert!(!levels.is_empty() && levels.len() <= 3, "one to three players");
        assert!(levels.iter().all(|l| !l.is_empty() && l.len() <= 21), "1..=21 levels");
        Self {
            levels,
            utility,
            states: 1,
            transition: None,
        }
    }

    pub fn with_states(mut self, states: usize, transition: Option<TransitionFn>) -> Self {
        assert!((1..=5).contains(&states), "one to five states");
        self.states = states;
        self.transition = transition;
        self
    }

    pub fn players(&self) -> usize {
        self.levels.len()
    }

    pub fn actions(&self, joint: &[usize]) -> Vec<f64> {
        joint.iter().zip(&self.levels).map(|(&k, l)| l[k]).collect()
    }

    pub fn payoff(&self, player: usize, state: usize, joint: &[usize]) -> f64 {
        (self.utility)(player, state, &self.actions(joint))
    }

    /// All joint actions in lexicographic order.
    pub fn joint_actions(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for l in &self.levels {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..l.len()).map(move |k| {
                        let mut v = prefix.clone();
                        v.push(k);
                        v
                    })
                })
                .collect();
        }
        out
    }

    /// Reached states of the transition rule, each at most once.
    pub fn reachable_states(&self) -> Vec<usize> {
        let mut seen = vec![false; self.states];
        seen[0] = true;
        if let Some(tr) = &self.transition {
            let joints = self.joint_actions();
            let mut frontier = vec![0];
            while let Some(s) = frontier.pop() {
                for j in &joints {
                    let next = tr(s, &self.actions(j));
                    if next < self.states && !seen[next] {
                        seen[next] = true;
                        frontier.push(next);
                    }
                }
            }
        } else {
            seen.iter_mut().for_each(|s| *s = true);
        }
        (0..self.states).filter(|&s| seen[s]).collect()
    }
}

/// Largest mismatch between a player's utility change and the potential
/// change over every unilateral deviation in every reachable state.
pub fn check_exact_pg(game: &TinyGame, potential: &dyn Fn(usize, &[f64]) -> f64) -> ConditionReport {
    let mut residual: f64 = 0.0;
    let mut count = 0;
    for s in game.reachable_states() {
        for joint in game.joint_actions() {
            let a = game.actions(&joint);
            let phi = potential(s, &a);
            for i in 0..game.players() {
                let u = (game.utility)(i, s, &a);
                for k in 0..game.levels[i].len() {
                    if k == joint[i] {
                        continue;
                    }
                    let mut b = a.clone();
                    b[i] = game.levels[i][k];
                    let du = (game.utility)(i, s, &b) - u;
                    let dphi = potential(s, &b) - phi;
                    residual = residual.max((du - dphi).abs());
                    count += 1;
                }
            }
        }
    }
    ConditionReport {
        max_pg_residual: residual,
        samples: count,
        checks: vec![ConditionCheck::below("exact_pg_residual", residual, ENUMERATION_TOL)],
        ..ConditionReport::default()
    }
}

fn is_ne(game: &TinyGame, state: usize, joint: &[usize]) -> bool {
    (0..game.players()).all(|i| {
        let u = game.payoff(i, state, joint);
        let mut alt = joint.to_vec();
        (0..game.levels[i].len()).all(|k| {
            alt[i] = k;
            game.payoff(i, state, &alt) <= u + ENUMERATION_TOL
        })
    })
}

/// Every joint action (as level indices) in `state` from which no single
/// player improves by a discrete deviation.
pub fn brute_force_ne(game: &TinyGame, state: usize) -> Vec<Vec<usize>> {
    game.joint_actions()
        .into_iter()
        .filter(|j| is_ne(game, state, j))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceCertificate {
    pub certified: bool,
    /// Sweeps over all players that changed at least one action.
    pub rounds: usize,
    /// Joint action and potential after every accepted move, start first.
    pub trajectory: Vec<(Vec<usize>, f64)>,
    /// Potential rose strictly along every accepted move.
    pub strictly_increasing: bool,
}

/// Sequential best response: players take turns switching to a strictly
/// better level (lowest index among the maximizers). Certified when a sweep
/// changes nothing and the fixed point is a Nash equilibrium.
pub fn certify_convergence(
    game: &TinyGame,
    state: usize,
    start: &[usize],
    max_rounds: usize,
    potential: &dyn Fn(usize, &[f64]) -> f64,
) -> ConvergenceCertificate {
    let mut joint = start.to_vec();
    let mut phi = potential(state, &game.actions(&joint));
    let mut trajectory = vec![(joint.clone(), phi)];
    let mut strictly_increasing = true;
    let mut rounds = 0;
    loop {
        let mut changed = false;
        for i in 0..game.players() {
            let current = game.payoff(i, state, &joint);
            let mut best = (joint[i], current);
            let mut alt = joint.clone();
            for k in 0..game.levels[i].len() {
                alt[i] = k;
                let u = game.payoff(i, state, &alt);
                if u > best.1 + ENUMERATION_TOL {
                    best = (k, u);
                }
            }
            if best.0 != joint[i] {
                joint[i] = best.0;
                let next = potential(state, &game.actions(&joint));
                strictly_increasing &= next > phi;
                phi = next;
                trajectory.push((joint.clone(), phi));
                changed = true;
            }
        }
        if !changed {
            return ConvergenceCertificate {
                certified: strictly_increasing && is_ne(game, state, &joint),
                rounds,
                trajectory,
                strictly_increasing,
            };
        }
        rounds += 1;
        if rounds >= max_rounds {
            return ConvergenceCertificate {
                certified: false,
                rounds,
                trajectory,
                strictly_increasing,
            };
        }
    }
}

/// Evenly spaced levels `0, 1/(n-1), ..., 1`.
pub fn unit_levels(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 / (n - 1).max(1) as f64).collect()
}

/// Two players on 11 levels, both scored by `-(a_1 - a_2)^2`.
pub fn coordination_game() -> TinyGame {
    TinyGame::new(
        vec![unit_levels(11), unit_levels(11)],
        Box::new(|_, _, a| -(a[0] - a[1]) * (a[0] - a[1])),
    )
}

/// Two players with private objectives and a shared sliding-window pull.
pub fn transfer_game(alpha: f64) -> (TinyGame, impl Fn(usize, &[f64]) -> f64) {
    let base = |i: usize, a: f64| -> f64 {
        let target = if i == 0 { 0.3 } else { 0.8 };
        1.0 / (1.0 + (a - target) * (a - target))
    };
    let shared = |a: &[f64]| sw_loss(&[a[0]], &[a[1]], 1).expect("valid window");
    let game = TinyGame::new(
        vec![unit_levels(21), unit_levels(21)],
        Box::new(move |i, _, a| base(i, a[i]) - alpha * shared(a)),
    );
    let phi = move |_: usize, a: &[f64]| base(0, a[0]) + base(1, a[1]) - alpha * shared(a);
    (game, phi)
}

/// The full check battery behind the `verify` command.
pub fn verify_all(seed: u64) -> ConditionReport {
    let h = 1e-4;
    let mut all = ConditionReport::default();
    let mut absorb = |prefix: &str, r: ConditionReport| {
        all.samples += r.samples;
        all.max_cross_asymmetry = all.max_cross_asymmetry.max(r.max_cross_asymmetry);
        all.max_pg_residual = all.max_pg_residual.max(r.max_pg_residual);
        for mut c in r.checks {
            c.name = format!("{prefix}:{}", c.name);
            all.checks.push(c);
        }
    };

    for horizon in [1, 5, 10] {
        let loss = sw_pair_loss(horizon, seed);
        let mut r = check_cross_partials(&loss, 100, h, seed);
        r.checks.push(ConditionCheck::near("mixed_partial_min", r.mixed_partial_min, -2.0, 1e-4));
        r.checks.push(ConditionCheck::near("mixed_partial_max", r.mixed_partial_max, -2.0, 1e-4));
        absorb(&format!("sw_h{horizon}"), r);
    }
    for alpha in [0.0, 0.5, 1.0] {
        let loss = mom_pair_loss(alpha, 0.37);
        let mut r = check_cross_partials(&loss, 100, h, seed);
        let target = -2.0 * (1.0 - alpha);
        r.checks.push(ConditionCheck::near("mixed_partial_min", r.mixed_partial_min, target, 1e-4));
        r.checks.push(ConditionCheck::near("mixed_partial_max", r.mixed_partial_max, target, 1e-4));
        absorb(&format!("mom_a{alpha}"), r);
    }

    let skew = |x: f64, y: f64| x * x * y * y * y;
    let detector = check_cross_partials(&skew, 100, h, seed);
    absorb(
        "detector",
        ConditionReport {
            checks: vec![ConditionCheck {
                name: "asymmetry_detected".into(),
                value: detector.max_cross_asymmetry,
                tolerance: CROSS_PARTIAL_TOL,
                passed: detector.max_cross_asymmetry > CROSS_PARTIAL_TOL,
            }],
            ..ConditionReport::default()
        },
    );

    let sw_state = |_: &[f64], ai: f64, aj: f64| sw_loss(&[ai], &[aj], 1).expect("valid");
    let free = is_state_free(&sw_state, 2, 100, seed);
    absorb(
        "state_free",
        ConditionReport {
            checks: vec![ConditionCheck {
                name: "pair_losses_ignore_state".into(),
                value: f64::from(u8::from(free)),
                tolerance: 1.0,
                passed: free,
            }],
            ..ConditionReport::default()
        },
    );

    let (game, phi) = transfer_game(0.5);
    absorb("transfer_game", check_exact_pg(&game, &phi));

    let game = coordination_game();
    let coord_phi = |_: usize, a: &[f64]| -(a[0] - a[1]) * (a[0] - a[1]);
    absorb("coordination", check_exact_pg(&game, &coord_phi));
    let ne = brute_force_ne(&game, 0);
    let diagonal = ne.len() == 11 && ne.iter().all(|j| j[0] == j[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut certified = 0;
    for _ in 0..20 {
        let start = [rng.gen_range(0..11), rng.gen_range(0..11)];
        let cert = certify_convergence(&game, 0, &start, 50, &coord_phi);
        if cert.certified && ne.contains(&cert.trajectory.last().expect("start").0) {
            certified += 1;
        }
    }
    absorb(
        "nash",
        ConditionReport {
            checks: vec![
                ConditionCheck {
                    name: "ne_is_diagonal".into(),
                    value: ne.len() as f64,
                    tolerance: 0.0,
                    passed: diagonal,
                },
                ConditionCheck {
                    name: "certified_starts".into(),
                    value: certified as f64,
                    tolerance: 0.0,
                    passed: certified == 20,
                },
            ],
            ..ConditionReport::default()
        },
    );
    all
}
