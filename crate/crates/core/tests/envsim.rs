mod common;

use std::collections::BTreeMap;

use lattice_cl::envsim::cartpole::{self, CartPole, CartPoleParams, MULTIPLIER_MAX, MULTIPLIER_MIN};
use lattice_cl::envsim::gridworld::{self, builtin_layouts, Layout, BUILTIN_LAYOUTS};
use lattice_cl::envsim::passive::{sample_gaussian, split_by_class, Dataset};
use lattice_cl::envsim::{
    context_at, wrap_for_setting, Environment, EnvironmentSpec, Family, Observation, ScheduleKind, World,
};
use lattice_cl::evaluation::{default_family, default_schedule};
use lattice_cl::rng::stream;
use lattice_cl::taxonomy::{BoundarySignal, Catalog, ContextObservability};
use proptest::prelude::*;
use rand::Rng;

fn rollout(env: &mut dyn Environment, actions: &[usize]) -> Vec<(Observation, f64, Option<usize>)> {
    let mut out = Vec::new();
    let mut obs = env.reset().unwrap();
    out.push((obs.clone(), 0.0, None));
    for &a in actions {
        if obs.episode_done {
            if env.is_exhausted() {
                break;
            }
            obs = env.reset().unwrap();
            out.push((obs.clone(), 0.0, None));
        }
        let (o, f) = env.step(a % env.action_space().n).unwrap();
        out.push((o.clone(), f.reward, f.label));
        obs = o;
    }
    out
}

fn family_strategy() -> impl Strategy<Value = (Family, ScheduleKind)> {
    prop_oneof![
        Just((Family::SyntheticGaussianSl, ScheduleKind::IncrementalSequence)),
        Just((Family::SyntheticGaussianSl, ScheduleKind::ContinuousDrift)),
        Just((Family::SyntheticGaussianSl, ScheduleKind::DiscreteChain)),
        Just((Family::CartPoleVariant, ScheduleKind::ContinuousDrift)),
        Just((Family::CartPoleVariant, ScheduleKind::IncrementalSequence)),
        Just((Family::MultiLayoutGridworld, ScheduleKind::IncrementalSequence)),
        Just((Family::MultiLayoutGridworld, ScheduleKind::StationaryMixture)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rollouts_are_deterministic(
        (family, kind) in family_strategy(),
        seed in 0u64..1000,
        tasks in 1usize..4,
        actions in prop::collection::vec(0usize..8, 1..300),
    ) {
        let spec = EnvironmentSpec::new(family, kind, tasks, 150);
        let run = || {
            let world = World::build(&spec, seed).unwrap();
            let mut env = world.train_env(0).unwrap();
            rollout(&mut env, &actions)
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn masking_matches_assumptions(index in 0usize..12, seed in 0u64..1000, phase in 0usize..2) {
        let cat = Catalog::canonical();
        let node = cat.concrete().nth(index).unwrap();
        let a = node.assumptions;
        let spec = EnvironmentSpec::new(default_family(a.branch), default_schedule(&a, 2), 2, 120);
        let world = World::build(&spec, seed).unwrap();
        let phase = phase.min(world.schedule.num_phases() - 1);
        let envs = vec![
            world.train_env(phase).unwrap(),
            world.valid_env(phase).unwrap(),
            world.test_env(0, phase, 50).unwrap(),
        ];
        for raw in envs {
            let mut env = wrap_for_setting(raw, &a).unwrap();
            let actions: Vec<usize> = (0..200).collect();
            for (o, _, _) in rollout(&mut env, &actions) {
                prop_assert_eq!(o.task_id.is_some(), a.context_observed == ContextObservability::Observed);
                prop_assert_eq!(o.boundary.is_some(), a.boundary_signal == BoundarySignal::Signaled);
            }
        }
    }

    #[test]
    fn passive_streams_ignore_actions(seed in 0u64..1000, a in prop::collection::vec(0usize..10, 100), b in prop::collection::vec(0usize..10, 100)) {
        let mut spec = EnvironmentSpec::new(Family::SyntheticGaussianSl, ScheduleKind::IncrementalSequence, 5, 100);
        spec.disjoint_actions = true;
        let world = World::build(&spec, seed).unwrap();
        let xs = |actions: &[usize]| -> Vec<Vec<f64>> {
            rollout(&mut world.train_env(1).unwrap(), actions).into_iter().map(|(o, _, _)| o.x).collect()
        };
        prop_assert_eq!(xs(&a), xs(&b));
    }

    #[test]
    fn drift_hits_anchors_and_midpoints(seed in 0u64..1000, k in 0usize..3) {
        let spec = EnvironmentSpec::new(Family::SyntheticGaussianSl, ScheduleKind::ContinuousDrift, 4, 200);
        let world = World::build(&spec, seed).unwrap();
        let s = &world.schedule;
        let at = |t: u64| context_at(s, t).values;
        prop_assert_eq!(at(((k + 1) * 200) as u64), s.anchors[k + 1].values.clone());
        let mid = at((k * 200 + 100) as u64);
        for ((m, a), b) in mid.iter().zip(&s.anchors[k].values).zip(&s.anchors[k + 1].values) {
            prop_assert!((m - 0.5 * (a + b)).abs() < 1e-12);
        }
    }

    #[test]
    fn class_split_is_a_partition(tasks in 1usize..5, per in 1usize..4, rows in 1usize..200, seed in 0u64..100) {
        let k = tasks * per;
        let mut rng = stream(seed, "data", 0);
        let labels: Vec<usize> = (0..rows).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        let data = Dataset {
            features: labels.iter().map(|&l| vec![l as f64]).collect(),
            labels,
            num_classes: k,
        };
        let parts = split_by_class(&data, tasks, seed).unwrap();
        prop_assert_eq!(parts.iter().map(Dataset::len).sum::<usize>(), data.len());
        for (t, p) in parts.iter().enumerate() {
            prop_assert!(p.labels.iter().all(|&l| (t * per..(t + 1) * per).contains(&l)));
            prop_assert!(p.features.iter().zip(&p.labels).all(|(f, &l)| f[0] == l as f64));
        }
    }
}

#[test]
fn incremental_rollout_visits_each_task_for_one_phase() {
    for family in [Family::SyntheticGaussianSl, Family::MultiLayoutGridworld, Family::CartPoleVariant] {
        let spec = EnvironmentSpec::new(family, ScheduleKind::IncrementalSequence, 3, 250);
        let world = World::build(&spec, 3).unwrap();
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for phase in 0..3 {
            let mut env = world.train_env(phase).unwrap();
            let mut obs = env.reset().unwrap();
            for _ in 0..250 {
                if obs.episode_done {
                    obs = env.reset().unwrap();
                }
                *counts.entry(obs.task_id.unwrap()).or_default() += 1;
                obs = env.step(0).unwrap().0;
            }
            assert!(env.is_exhausted() || family.branch() == lattice_cl::taxonomy::Branch::Passive);
        }
        assert_eq!(counts, (0..3).map(|t| (t, 250)).collect(), "{family:?}");
    }
}

#[test]
fn sampled_multipliers_in_range_and_reproducible() {
    let mut a = stream(5, "tasks", 0);
    let mut b = stream(5, "tasks", 0);
    for _ in 0..10_000 {
        let ctx = cartpole::sample_task_cartpole(&mut a);
        assert_eq!(ctx, cartpole::sample_task_cartpole(&mut b));
        assert!(ctx.values.iter().all(|m| (MULTIPLIER_MIN..=MULTIPLIER_MAX).contains(m)));
    }
}

fn mean_random_episode_len(gravity: f64) -> f64 {
    let params = CartPoleParams::from_multipliers(&[gravity, 1.0, 1.0, 1.0]).unwrap();
    let mut rng = stream(1, "mc", (gravity * 10.0) as u64);
    let mut total = 0;
    for _ in 0..200 {
        let mut cp = CartPole::random_start(&mut rng, cartpole::MAX_EPISODE_LEN);
        loop {
            let (_, done) = cp.step(rng.random_range(0..2), &params).unwrap();
            if done {
                break;
            }
        }
        total += cp.steps;
    }
    total as f64 / 200.0
}

#[test]
fn heavier_gravity_shortens_random_episodes() {
    let heavy = mean_random_episode_len(2.0);
    let light = mean_random_episode_len(0.5);
    assert!(heavy < light, "heavy {heavy} light {light}");
}

/// Exhaustive search driven by the library's own transition function.
fn library_optimum(layout: &Layout) -> f64 {
    let mut frontier = vec![(layout.initial_state(), 0.0)];
    let mut best_at: BTreeMap<(usize, u64), f64> = BTreeMap::new();
    let mut best = f64::NEG_INFINITY;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for (state, ret) in frontier {
            for a in 0..gridworld::NUM_ACTIONS {
                let (s2, r, done) = gridworld::step_layout(layout, &state, a, common::GRID_HORIZON).unwrap();
                let total = ret + r;
                if done {
                    best = best.max(total);
                    continue;
                }
                let key = (s2.pos, s2.coins_left);
                if best_at.get(&key).is_none_or(|&v| total > v) {
                    best_at.insert(key, total);
                    next.push((s2, total));
                }
            }
        }
        frontier = next;
    }
    best
}

#[test]
fn optimal_returns_agree_with_search_oracle() {
    for (text, layout) in BUILTIN_LAYOUTS.iter().zip(builtin_layouts()) {
        let oracle = common::bfs_optimal_return(text);
        assert!((library_optimum(&layout) - oracle).abs() < 1e-9);
    }
    assert!((common::bfs_optimal_return(BUILTIN_LAYOUTS[0]) - 9.97).abs() < 1e-9);
}

#[test]
fn nearest_prototype_is_near_bayes_optimal() {
    let spec = EnvironmentSpec::new(Family::SyntheticGaussianSl, ScheduleKind::IncrementalSequence, 3, 10);
    let world = World::build(&spec, 9).unwrap();
    let (classes, dim) = (spec.classes_per_task, spec.input_dim);
    let mut rng = stream(9, "oracle", 0);
    let mut correct = 0;
    for i in 0..10_000 {
        let ctx = &world.schedule.anchors[i % 3];
        let (x, y) = sample_gaussian(ctx, classes, spec.noise_std, false, &mut rng).unwrap();
        let nearest = (0..classes)
            .min_by(|&a, &b| {
                let d = |c: usize| -> f64 {
                    x.iter().zip(&ctx.values[c * dim..(c + 1) * dim]).map(|(p, q)| (p - q).powi(2)).sum()
                };
                d(a).total_cmp(&d(b))
            })
            .unwrap();
        correct += (nearest == y) as usize;
    }
    assert!(correct as f64 / 10_000.0 >= 0.99, "{correct}");
}
