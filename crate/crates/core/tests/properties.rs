use approx::assert_relative_eq;
use proptest::prelude::*;

use tlsbpg::config::ExperimentConfig;
use tlsbpg::env::Plant;
use tlsbpg::oracle::{brute_force_ne, mixed_partial, unit_levels, TinyGame};
use tlsbpg::rbf::{similarity, RbfConfig, RbfLatent};
use tlsbpg::sbpg::{bin_center, discretize, Action, DecaySchedule, PerformanceMap, StateVector};
use tlsbpg::transfer::{alpha_from_divergence, jsd, mom_loss, MomState};

fn distribution(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn default_plant() -> Plant {
    let config = ExperimentConfig::builtin("bgs_default").unwrap();
    Plant::new(config.graph().unwrap(), config.utility).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cell_keeps_running_max(
        state in prop::collection::vec(0.0..=1.0f64, 2),
        offers in prop::collection::vec((0.0..=1.0f64, -5.0..5.0f64), 1..40),
    ) {
        let mut map = PerformanceMap::new(2, 40).unwrap();
        let s = StateVector::new(state).unwrap();
        let idx = map.index_of(&s).unwrap();
        let mut previous = f64::NEG_INFINITY;
        for (k, &(a, u)) in offers.iter().enumerate() {
            map.update(&s, Action::new(a).unwrap(), u).unwrap();
            let best = map.cell(&idx).best_utility;
            let fold = offers[..=k].iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(best, fold);
            prop_assert!(best >= previous);
            previous = best;
        }
    }

    #[test]
    fn interpolation_is_convex(
        support in prop::collection::vec(
            (prop::collection::vec(0.0..=1.0f64, 2), 0.0..=1.0f64, -1.0..1.0f64), 1..25),
        query in prop::collection::vec(0.0..=1.0f64, 2),
    ) {
        let mut map = PerformanceMap::new(2, 10).unwrap();
        for (s, a, u) in &support {
            map.update(&StateVector::new(s.clone()).unwrap(), Action::new(*a).unwrap(), *u).unwrap();
        }
        let stored: Vec<f64> = map.support_points().map(|(_, a, _)| a).collect();
        let lo = stored.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = stored.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let got = map.interpolate(&StateVector::new(query).unwrap()).unwrap().value();
        prop_assert!(got >= lo - 1e-12 && got <= hi + 1e-12, "{got} not in [{lo}, {hi}]");
    }

    #[test]
    fn cell_centers_round_trip(bins in 2usize..60, k0 in 0usize..60, k1 in 0usize..60) {
        let (k0, k1) = (k0 % bins, k1 % bins);
        let s = StateVector::new(vec![bin_center(k0, bins), bin_center(k1, bins)]).unwrap();
        let idx = discretize(&s, bins).unwrap();
        prop_assert_eq!(idx.bins(), &[k0, k1][..]);
    }

    #[test]
    fn jsd_symmetric_and_bounded(
        raw in prop::collection::vec((1e-6..1.0f64, 1e-6..1.0f64), 2..50),
    ) {
        let p = distribution(raw.iter().map(|x| x.0).collect());
        let q = distribution(raw.iter().map(|x| x.1).collect());
        let pq = jsd(&p, &q).unwrap();
        let qp = jsd(&q, &p).unwrap();
        prop_assert_eq!(pq.to_bits(), qp.to_bits());
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert!(jsd(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mom_loss_stays_non_negative(
        alpha in 0.0..=1.0f64,
        actions in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..60),
    ) {
        let mut state = MomState::default();
        for (t, &(ai, aj)) in actions.iter().enumerate() {
            let h = mom_loss(&mut state, ai, aj, alpha, t as u64).unwrap();
            prop_assert!(h >= 0.0);
        }
    }

    #[test]
    fn transfer_weight_gate_and_monotone(
        epsilon in 0.0..=1.0f64,
        beta in 0.0..=1.0f64,
        d1 in 0.0..2.0f64,
        d2 in 0.0..2.0f64,
    ) {
        let a1 = alpha_from_divergence(epsilon, beta, d1);
        let a2 = alpha_from_divergence(epsilon, beta, d2);
        if epsilon >= beta {
            prop_assert_eq!(a1, 0.0);
        }
        prop_assert!((0.0..=1.0).contains(&a1));
        if d1 <= d2 {
            prop_assert!(a1 >= a2);
        }
    }

    #[test]
    fn rbf_basis_partition_of_unity(
        dim in 1usize..4,
        side in 1usize..5,
        raw in prop::collection::vec(0.0..=1.0f64, 3),
    ) {
        let config = RbfConfig::grid(dim, side, None, 10).unwrap();
        let phi = config.basis(&raw[..dim]);
        prop_assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(phi.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn similarity_is_squared_metric(
        a in prop::collection::vec(-2.0..2.0f64, 18),
        b in prop::collection::vec(-2.0..2.0f64, 18),
    ) {
        let la = RbfLatent { theta_action: a[..9].to_vec(), theta_utility: a[9..].to_vec(), fitted_at_step: 0 };
        let lb = RbfLatent { theta_action: b[..9].to_vec(), theta_utility: b[9..].to_vec(), fitted_at_step: 0 };
        let ab = similarity(&la, &lb).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, similarity(&lb, &la).unwrap());
        prop_assert_eq!(similarity(&la, &la).unwrap(), 0.0);
    }

    #[test]
    fn epsilon_never_increases(eps_min in 0.001..0.5f64, total in 2u64..5000, steps in 1u64..8000) {
        let schedule = DecaySchedule::reaching_floor_at(1.0, eps_min, total, 0.8).unwrap();
        let mut last = schedule.value(0);
        for t in 1..steps.min(200) {
            let v = schedule.value(t * steps / 200);
            prop_assert!(v <= last + 1e-15);
            prop_assert!(v >= eps_min);
            last = v;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn plant_conserves_mass_and_bounds(
        initial in prop::collection::vec(0.0..=1.0f64, 6),
        actions in prop::collection::vec(prop::collection::vec(0.0..=1.0f64, 5), 1..300),
    ) {
        let mut plant = default_plant();
        let caps: Vec<f64> = plant.graph().reservoirs.iter().map(|r| r.capacity).collect();
        for (r, (&x, &cap)) in initial.iter().zip(&caps).enumerate() {
            if !plant.graph().reservoirs[r].supply {
                plant.set_fill(r, x * cap);
            }
        }
        let mut totals = plant.overflow_totals().to_vec();
        for joint in &actions {
            let joint: Vec<Action> = joint.iter().map(|&a| Action::new(a).unwrap()).collect();
            let out = plant.step(&joint).unwrap();
            prop_assert!(out.mass_balance_error() < 1e-9, "{}", out.mass_balance_error());
            for (r, &fill) in plant.fills().iter().enumerate() {
                prop_assert!(fill >= 0.0 && fill <= caps[r] + 1e-12);
            }
            for (now, before) in plant.overflow_totals().iter().zip(&totals) {
                prop_assert!(now >= before);
            }
            totals = plant.overflow_totals().to_vec();
        }
    }

    #[test]
    fn nash_set_survives_player_rotation(table in prop::collection::vec(-1.0..1.0f64, 81)) {
        // 3 players, 3 levels each: payoff of player i at joint (a0, a1, a2)
        let levels = unit_levels(3);
        let index = |v: f64| (v * 2.0).round() as usize;
        let t1 = table.clone();
        let original = TinyGame::new(
            vec![levels.clone(), levels.clone(), levels.clone()],
            Box::new(move |i, _, a| t1[i * 27 + index(a[0]) * 9 + index(a[1]) * 3 + index(a[2])]),
        );
        // new player k is old player (k + 1) % 3
        let t2 = table;
        let rotated = TinyGame::new(
            vec![levels.clone(), levels.clone(), levels],
            Box::new(move |k, _, b| {
                let old = [b[2], b[0], b[1]];
                t2[((k + 1) % 3) * 27 + index(old[0]) * 9 + index(old[1]) * 3 + index(old[2])]
            }),
        );
        let mut expected: Vec<Vec<usize>> = brute_force_ne(&original, 0)
            .into_iter()
            .map(|a| vec![a[1], a[2], a[0]])
            .collect();
        let mut got = brute_force_ne(&rotated, 0);
        expected.sort();
        got.sort();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn finite_difference_error_is_second_order(x in 0.2..0.9f64, y in 0.2..0.9f64) {
        let f = |a: f64, b: f64| a * a * a * b * b * b;
        let exact = 9.0 * x * x * y * y;
        let coarse = (mixed_partial(&f, x, y, 1e-2) - exact).abs();
        let fine = (mixed_partial(&f, x, y, 5e-3) - exact).abs();
        let ratio = coarse / fine;
        prop_assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn greedy_selection_is_a_function_of_state() {
    let mut map = PerformanceMap::new(2, 40).unwrap();
    for k in 0..30 {
        let s = StateVector::new(vec![(k as f64 * 0.37) % 1.0, (k as f64 * 0.61) % 1.0]).unwrap();
        map.update(&s, Action::new((k as f64 * 0.13) % 1.0).unwrap(), k as f64).unwrap();
    }
    let q = StateVector::new(vec![0.42, 0.17]).unwrap();
    let a = map.interpolate(&q).unwrap().value();
    for _ in 0..10 {
        assert_eq!(map.interpolate(&q).unwrap().value(), a);
    }
    assert_relative_eq!(a, map.clone().interpolate(&q).unwrap().value());
}
