use proptest::prelude::*;

use rlcg_core::agent::{HyperParams, ReplayBuffer, Trainer};
use rlcg_core::cg::{normalize_trajectory, run_cg, CgEnv};
use rlcg_core::instances::{generate_instance, parse_bpplib_named, Instance};
use rlcg_core::policies::Policy;
use rlcg_core::pricing::{brute_force_patterns, dual_value, kbest_knapsack, DEFAULT_TOL_RC};
use rlcg_core::qnet::checkpoint::{load_checkpoint, save_checkpoint};
use rlcg_core::rng::SplitMix64;
use rlcg_core::simplex::{solve_rmp, SimplexOptions, Solver};
use rlcg_core::state::{build_state, normalize_features};

fn instance_strategy() -> impl Strategy<Value = Instance> {
    (6u64..=16, 2u64..=10, any::<u64>()).prop_map(|(l, m, seed)| generate_instance(l, m, 0.1, 0.7, seed).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bpplib_round_trip(inst in instance_strategy()) {
        let back = parse_bpplib_named(&inst.to_bpplib(), &inst.name).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn pricing_best_matches_enumeration(
        l in 1u64..=20,
        sizes in prop::collection::vec(1u64..=20, 1..5),
        duals in prop::collection::vec(0.0f64..1.0, 5),
        k in 1usize..=10,
    ) {
        let duals = &duals[..sizes.len()];
        let set = kbest_knapsack(duals, &sizes, l, k, DEFAULT_TOL_RC);
        let best = brute_force_patterns(&sizes, l)
            .unwrap()
            .into_iter()
            .map(|x| 1.0 - dual_value(&x, duals))
            .fold(f64::INFINITY, f64::min);
        match set.patterns.first() {
            Some(p) => prop_assert_eq!(p.reduced_cost, best),
            None => prop_assert!(best >= -DEFAULT_TOL_RC),
        }
        prop_assert!(set.len() <= k);
        for p in &set.patterns {
            let used: u64 = p.counts.iter().zip(&sizes).map(|(&c, &a)| u64::from(c) * a).sum();
            prop_assert!(used <= l);
            prop_assert_eq!(p.waste, l - used);
            prop_assert!(p.reduced_cost < -DEFAULT_TOL_RC);
        }
        // A larger pool never changes the leader.
        let wider = kbest_knapsack(duals, &sizes, l, k + 3, DEFAULT_TOL_RC);
        prop_assert_eq!(wider.patterns.first().map(|p| &p.counts), set.patterns.first().map(|p| &p.counts));
    }

    #[test]
    fn warm_start_matches_cold_solve(inst in instance_strategy(), picks in prop::collection::vec(any::<u64>(), 1..6)) {
        let demands: Vec<f64> = inst.demands.iter().map(|&d| d as f64).collect();
        let all = brute_force_patterns(&inst.sizes, inst.roll_length).unwrap();
        let mut columns: Vec<Vec<f64>> = (0..inst.num_order_types())
            .map(|i| {
                let mut c = vec![0.0; inst.num_order_types()];
                c[i] = (inst.roll_length / inst.sizes[i]) as f64;
                c
            })
            .collect();
        let mut warm = Solver::new(&demands, SimplexOptions::default());
        for c in &columns {
            warm.add_column(c, 1.0).unwrap();
        }
        warm.solve().unwrap();
        for p in picks {
            let x: Vec<f64> = all[(p % all.len() as u64) as usize].iter().map(|&v| f64::from(v)).collect();
            let w = warm.warm_solve(&x, 1.0).unwrap();
            columns.push(x);
            let cold = solve_rmp(&columns, &demands).unwrap();
            prop_assert!((w.objective - cold.objective).abs() < 1e-9);
        }
    }

    #[test]
    fn normalized_features_in_unit_range(inst in instance_strategy(), steps in 0usize..4) {
        let mut env = CgEnv::reset(&inst, HyperParams::default().env_config()).unwrap();
        for _ in 0..steps {
            if env.is_done() {
                break;
            }
            env.advance(0).unwrap();
        }
        if let Some(raw) = env.raw_state() {
            let n = normalize_features(&raw);
            prop_assert!(n.column_features.iter().flatten().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!(n.constraint_features.iter().flatten().all(|&x| (0.0..=1.0).contains(&x)));
            let edges = raw.edges.len() as f64;
            let col_deg: f64 = raw.column_features.iter().map(|f| f[1]).sum();
            let con_deg: f64 = raw.constraint_features.iter().map(|f| f[1]).sum();
            prop_assert_eq!(col_deg, edges);
            prop_assert_eq!(con_deg, edges);
            prop_assert_eq!(&raw, &build_state(env.rmp(), env.candidates(), env.instance()));
        }
    }
}

#[test]
fn all_policies_reach_the_same_objective() {
    for seed in 0..10 {
        let inst = generate_instance(30, 25, 0.1, 0.7, seed).unwrap();
        let config = HyperParams::default().env_config();
        let objectives: Vec<f64> = [Policy::Greedy, Policy::Expert, Policy::Rl(Box::new(rlcg_core::QNetwork::new(16, 2, seed)))]
            .iter()
            .map(|p| run_cg(&inst, p, &config, 1000).unwrap().objective)
            .collect();
        for o in &objectives {
            assert!((o - objectives[0]).abs() < 1e-6, "{objectives:?}");
        }
    }
}

#[test]
fn trajectory_normalization_endpoints() {
    let inst = generate_instance(40, 30, 0.1, 0.7, 3).unwrap();
    let run = run_cg(&inst, &Policy::Greedy, &HyperParams::default().env_config(), 1000).unwrap();
    let n = normalize_trajectory(&run.trajectory);
    assert!(run.iterations >= 1);
    if run.trajectory[0] > *run.trajectory.last().unwrap() {
        assert_eq!(n[0], 1.0);
        assert_eq!(*n.last().unwrap(), 0.0);
    }
    assert_eq!(run.trajectory.len(), run.iterations);
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buffer = ReplayBuffer::new(10);
    for i in 0..10usize {
        buffer.push(i);
    }
    let mut rng = SplitMix64::new(9);
    let mut counts = [0f64; 10];
    let draws = 100_000;
    for x in buffer.sample(draws, &mut rng).unwrap() {
        counts[*x] += 1.0;
    }
    let expected = draws as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    // 9 degrees of freedom, p = 0.001 critical value.
    assert!(chi2 < 27.877, "chi2 = {chi2}");
}

#[test]
fn epsilon_one_explores_uniformly() {
    let inst = generate_instance(30, 25, 0.1, 0.7, 1).unwrap();
    let mut env = CgEnv::reset(&inst, HyperParams::default().env_config()).unwrap();
    let state = env.observe().unwrap().clone();
    let n = state.num_actions();
    assert!(n > 1);
    let net = rlcg_core::QNetwork::new(8, 1, 0);
    let mut rng = SplitMix64::new(5);
    let mut counts = vec![0f64; n];
    let draws = 20_000;
    for _ in 0..draws {
        counts[rlcg_core::agent::epsilon_greedy_select(&net, &state, 1.0, &mut rng).unwrap()] += 1.0;
    }
    let expected = draws as f64 / n as f64;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    assert!(chi2 < 40.0, "chi2 = {chi2} over {n} actions");
}

#[test]
fn training_is_reproducible_and_checkpoints_round_trip() {
    let curriculum: Vec<Instance> = (0..3).map(|s| generate_instance(20, 15, 0.1, 0.7, s).unwrap()).collect();
    let hyper = HyperParams { hidden: 8, rounds: 1, batch_size: 4, ..Default::default() };
    let a = rlcg_core::agent::train_curriculum(&curriculum, &hyper, &curriculum[..1], 2, 7).unwrap();
    let b = rlcg_core::agent::train_curriculum(&curriculum, &hyper, &curriculum[..1], 2, 7).unwrap();
    assert_eq!(a.training_log, b.training_log);
    assert_eq!(a.validation_log.len(), 1);
    let bytes = save_checkpoint(&a.network, &hyper);
    assert_eq!(bytes, save_checkpoint(&b.network, &hyper));
    let (net, h) = load_checkpoint::<f64>(&bytes).unwrap();
    assert_eq!(net, a.network);
    assert_eq!(h, hyper);
    assert!(a.training_log.iter().flat_map(|l| &l.losses).all(|l| l.is_finite()));
    let untrained = Trainer::new(hyper, 7).unwrap();
    assert_ne!(untrained.net, a.network);
}
