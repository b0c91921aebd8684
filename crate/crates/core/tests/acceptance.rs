//! End-to-end acceptance checks, one printed PASS/FAIL line per criterion.
//!
//! Each criterion is its own test and writes its verdict line to stderr
//! directly, so the report is visible even with output capture on.

use std::io::Write as _;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rlcg_core::agent::{self, Grid, HyperParams};
use rlcg_core::cg::{reward, CgEnv};
use rlcg_core::experiments as ex;
use rlcg_core::instances::{
    build_curriculum, desk_curriculum, desk_test, desk_validation, generate_instance, stage_of_episode, Instance,
    DESK_TEST_SEED, DESK_TRAIN_SEED, DESK_VALIDATION_SEED,
};
use rlcg_core::policies::{expert_select, greedy_select, Policy};
use rlcg_core::pricing::{brute_force_patterns, dual_value, kbest_knapsack, rank_order, DEFAULT_TOL_RC};
use rlcg_core::qnet::checkpoint::save_checkpoint;
use rlcg_core::qnet::Sample;
use rlcg_core::rng::SplitMix64;
use rlcg_core::simplex::solve_rmp;
use rlcg_core::state::BipartiteState;
use rlcg_core::QNetwork;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn lp_optimum(inst: &Instance) -> f64 {
    let columns: Vec<Vec<f64>> = brute_force_patterns(&inst.sizes, inst.roll_length)
        .unwrap()
        .into_iter()
        .filter(|x| x.iter().any(|&c| c > 0))
        .map(|x| x.into_iter().map(f64::from).collect())
        .collect();
    let demands: Vec<f64> = inst.demands.iter().map(|&d| d as f64).collect();
    solve_rmp(&columns, &demands).unwrap().objective
}

/// Largest violation of primal feasibility, strong duality and complementary slackness.
fn duality_gap(env: &CgEnv) -> f64 {
    let rmp = env.rmp();
    let sol = &rmp.solution;
    let d = env.demands();
    let mut worst = 0.0f64;
    let dual_obj: f64 = sol.duals.iter().zip(d).map(|(p, d)| p * d).sum();
    worst = worst.max((sol.objective - dual_obj).abs());
    worst = worst.max((sol.objective - sol.lambda.iter().sum::<f64>()).abs());
    for (i, &di) in d.iter().enumerate() {
        let lhs: f64 = rmp.columns.iter().zip(&sol.lambda).map(|(c, l)| f64::from(c.counts[i]) * l).sum();
        worst = worst.max((lhs - di).abs());
    }
    for (c, &l) in rmp.columns.iter().zip(&sol.lambda) {
        let rc = 1.0 - dual_value(&c.counts, &sol.duals);
        worst = worst.max((l * rc).abs());
        worst = worst.max((-rc).max(0.0));
    }
    worst
}

fn small_instances() -> Vec<Instance> {
    let mut rng = SplitMix64::new(11);
    (0..200)
        .map(|i| {
            let l = rng.range_inclusive(5, 12);
            let m = rng.range_inclusive(2, 12);
            generate_instance(l, m, 0.1, 0.7, 1_000 + i).unwrap()
        })
        .collect()
}

fn criteria_1_and_3() -> (Verdict, Verdict) {
    let policies = [Policy::Greedy, Policy::Expert, Policy::Rl(Box::new(QNetwork::new(32, 2, 5)))];
    let (mut worst_obj, mut worst_dual, mut solves) = (0.0f64, 0.0f64, 0usize);
    for inst in small_instances() {
        let optimum = lp_optimum(&inst);
        for policy in &policies {
            let mut env = CgEnv::reset(&inst, HyperParams::default().env_config()).unwrap();
            loop {
                worst_dual = worst_dual.max(duality_gap(&env));
                solves += 1;
                if env.is_done() {
                    break;
                }
                let a = policy.select(&mut env).unwrap();
                env.advance(a).unwrap();
            }
            worst_obj = worst_obj.max((env.rmp().objective() - optimum).abs());
        }
    }
    (
        verdict(worst_obj <= 1e-6, format!("max |obj - enumeration LP| = {worst_obj:.2e} over 200 instances x 3 policies")),
        verdict(worst_dual <= 1e-7, format!("max duality/slackness violation = {worst_dual:.2e} over {solves} master solves")),
    )
}

fn criterion_2() -> Verdict {
    let mut rng = SplitMix64::new(22);
    let mut mismatches = 0;
    for _ in 0..500 {
        let l = rng.range_inclusive(1, 20);
        let n = rng.range_inclusive(1, 5) as usize;
        let k = rng.range_inclusive(1, 10) as usize;
        let sizes: Vec<u64> = (0..n).map(|_| rng.range_inclusive(1, l)).collect();
        let duals: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 1.0)).collect();
        let got = kbest_knapsack(&duals, &sizes, l, k, DEFAULT_TOL_RC);
        let mut oracle: Vec<(f64, Vec<u32>)> = brute_force_patterns(&sizes, l)
            .unwrap()
            .into_iter()
            .map(|x| (dual_value(&x, &duals), x))
            .filter(|(v, _)| 1.0 - v < -DEFAULT_TOL_RC)
            .collect();
        oracle.sort_by(|a, b| rank_order(a.0, &a.1, b.0, &b.1));
        oracle.dedup_by(|a, b| a.1 == b.1);
        oracle.truncate(k);
        let mut a: Vec<Vec<u32>> = got.patterns.iter().map(|p| p.counts.clone()).collect();
        let mut b: Vec<Vec<u32>> = oracle.iter().map(|o| o.1.clone()).collect();
        a.sort();
        b.sort();
        let best_ok = match (got.patterns.first(), oracle.first()) {
            (Some(p), Some(o)) => p.reduced_cost == 1.0 - o.0,
            (None, None) => true,
            _ => false,
        };
        if a != b || !best_ok {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{mismatches} mismatches in 500 random pricing problems"))
}

fn random_states(count: usize, seed: u64) -> Vec<BipartiteState> {
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let l = rng.range_inclusive(8, 20);
        let m = rng.range_inclusive(3, 8);
        let inst = generate_instance(l, m, 0.1, 0.7, rng.next_u64() % 100_000).unwrap();
        let mut env = CgEnv::reset(&inst, HyperParams::default().env_config()).unwrap();
        let steps = rng.range_inclusive(0, 3);
        for _ in 0..steps {
            if env.is_done() {
                break;
            }
            let a = rng.index(env.candidates().len());
            env.advance(a).unwrap();
        }
        if let Some(s) = env.observe() {
            out.push(s.clone());
        }
    }
    out
}

fn criterion_4() -> Verdict {
    let h = 1e-5;
    let states = random_states(10, 44);
    let mut rng = SplitMix64::new(444);
    let mut worst = 0.0f64;
    for (si, state) in states.iter().enumerate() {
        let mut net = QNetwork::new(8, 2, 40 + si as u64);
        // Nonzero biases so every layer's bias gradient is exercised.
        for t in net.params.tensors_mut() {
            if t.rows == 1 {
                for x in &mut t.data {
                    *x = rng.uniform(-0.2, 0.2);
                }
            }
        }
        let action = rng.index(state.num_actions());
        let target = rng.uniform(-2.0, 2.0);
        let batch = [Sample { state, action, target }];
        let (_, grads) = net.loss_and_grad(&batch).unwrap();
        let sizes: Vec<usize> = net.params.tensors().iter().map(|t| t.data.len()).collect();
        let total: usize = sizes.iter().sum();
        for _ in 0..50 {
            let mut flat = rng.index(total);
            let mut ti = 0;
            while flat >= sizes[ti] {
                flat -= sizes[ti];
                ti += 1;
            }
            let analytic = grads.tensors()[ti].data[flat];
            let base = net.params.tensors()[ti].data[flat];
            let mut loss_at = |v: f64| {
                net.params.tensors_mut()[ti].data[flat] = v;
                net.loss_and_grad(&batch).unwrap().0
            };
            let numeric = (loss_at(base + h) - loss_at(base - h)) / (2.0 * h);
            net.params.tensors_mut()[ti].data[flat] = base;
            let scale = analytic.abs().max(numeric.abs());
            let rel = if scale < 1e-7 { (analytic - numeric).abs() } else { (analytic - numeric).abs() / scale };
            worst = worst.max(rel);
        }
    }
    verdict(worst < 1e-4, format!("max relative error {worst:.2e} over 10 states x 50 coordinates"))
}

fn criterion_5() -> Verdict {
    let mut rng = SplitMix64::new(55);
    let net = QNetwork::new(32, 2, 5);
    let mut exact = 0;
    for state in random_states(50, 555) {
        let mut cp: Vec<usize> = (0..state.column_nodes.len()).collect();
        let mut kp: Vec<usize> = (0..state.constraint_nodes.len()).collect();
        for i in (1..cp.len()).rev() {
            cp.swap(i, rng.index(i + 1));
        }
        for i in (1..kp.len()).rev() {
            kp.swap(i, rng.index(i + 1));
        }
        let q = net.forward(&state).unwrap();
        let qp = net.forward(&state.permuted(&cp, &kp)).unwrap();
        if q.iter().zip(&qp).all(|(a, b)| a.to_bits() == b.to_bits()) && q.len() == qp.len() {
            exact += 1;
        }
    }
    verdict(exact == 50, format!("{exact}/50 permuted states give bitwise-identical Q-values"))
}

fn criterion_6() -> Verdict {
    let constructed = [
        (reward(300.0, 10.0, 10.0, 10.0), -1.0),
        (reward(300.0, 10.0, 10.0, 9.0), 29.0),
        (reward(0.0, 4.0, 4.0, 3.0), -1.0),
        (reward(100.0, 8.0, 6.0, 5.0), 11.5),
    ];
    let cases_ok = constructed.iter().all(|(got, want)| (got - want).abs() < 1e-12);
    let instances = build_curriculum(&desk_curriculum(), 500).unwrap();
    let mut rng = SplitMix64::new(66);
    let alpha = 300.0;
    let mut worst = 0.0f64;
    for e in 0..50 {
        let inst = &instances[e % instances.len()];
        let mut env = CgEnv::reset(inst, HyperParams { alpha, ..Default::default() }.env_config()).unwrap();
        let (mut total, mut steps) = (0.0, 0usize);
        while !env.is_done() {
            let a = if e % 2 == 0 { greedy_select(env.candidates()).unwrap() } else { rng.index(env.candidates().len()) };
            total += env.advance(a).unwrap().0;
            steps += 1;
        }
        let h = &env.rmp().obj_history;
        let expect = alpha * (h[0] - h[h.len() - 1]) / h[0] - steps as f64;
        worst = worst.max((total - expect).abs());
    }
    verdict(cases_ok && worst <= 1e-9, format!("constructed cases ok={cases_ok}; max episode telescoping error {worst:.2e}"))
}

fn criterion_7() -> Verdict {
    let instances = build_curriculum(&desk_curriculum(), 700).unwrap();
    let extra = build_curriculum(&desk_curriculum(), 800).unwrap();
    let instances: Vec<_> = instances.into_iter().chain(extra).take(50).collect();
    let (mut steps, mut violations) = (0, 0);
    for inst in &instances {
        let mut env = CgEnv::reset(inst, HyperParams::default().env_config()).unwrap();
        while !env.is_done() {
            let e = expert_select(&env).unwrap();
            let g = greedy_select(env.candidates()).unwrap();
            let (oe, og) = (env.lookahead_objective(e).unwrap(), env.lookahead_objective(g).unwrap());
            if oe > og + 1e-9 * og.abs().max(1.0) {
                violations += 1;
            }
            steps += 1;
            env.advance(e).unwrap();
        }
    }
    verdict(violations == 0, format!("{violations} violations over {steps} steps on {} instances", instances.len()))
}

/// Everything one generate -> train -> evaluate run writes.
#[derive(PartialEq)]
struct PipelineOutput {
    files: Vec<(String, Vec<u8>)>,
    ratio: f64,
    slopes: Vec<f64>,
    seconds: f64,
}

fn pipeline(root: &Path, seed: u64) -> PipelineOutput {
    let start = Instant::now();
    let dirs = [root.join("train"), root.join("val"), root.join("test")];
    let specs = [(desk_curriculum(), DESK_TRAIN_SEED), (desk_validation(), DESK_VALIDATION_SEED), (desk_test(), DESK_TEST_SEED)];
    for (dir, (stages, base)) in dirs.iter().zip(&specs) {
        ex::write_instances(dir, &build_curriculum(stages, *base).unwrap()).unwrap();
    }
    let train = ex::load_instances(&dirs[0]).unwrap();
    let val = ex::load_instances(&dirs[1]).unwrap();
    let test = ex::load_instances(&dirs[2]).unwrap();
    let hyper = HyperParams::default();
    let out = agent::train_curriculum(&train, &hyper, &val, 20, seed).unwrap();
    let policies = [Policy::Greedy, Policy::Rl(Box::new(out.network.clone()))];
    let records = ex::evaluate(&test, &policies, &hyper.env_config(), hyper.max_iters, false).unwrap();
    let slopes = ex::stage_slopes(&out.training_log, &stage_of_episode(&desk_curriculum()));
    let files = vec![
        ("model.ckpt".to_string(), save_checkpoint(&out.network, &hyper)),
        ("training_log.csv".to_string(), ex::training_log_csv(&out.training_log).into_bytes()),
        ("validation_log.csv".to_string(), ex::validation_log_csv(&out.validation_log).into_bytes()),
        ("runs.csv".to_string(), ex::runs_csv(&records).into_bytes()),
        ("summary.csv".to_string(), ex::summary_csv(&ex::summarize(&records)).into_bytes()),
        ("convergence.csv".to_string(), ex::convergence_csv(&ex::convergence(&records)).into_bytes()),
        ("ratios.csv".to_string(), ex::ratios_csv(&records).into_bytes()),
    ];
    PipelineOutput {
        files,
        ratio: ex::geometric_mean_ratio(&records, "greedy", "rl").unwrap(),
        slopes,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn criteria_8_and_9() -> (Verdict, Verdict) {
    let tmp = tempfile::tempdir().unwrap();
    let first = pipeline(&tmp.path().join("a"), 0);
    let second = pipeline(&tmp.path().join("b"), 0);
    let non_increasing = first.slopes.iter().filter(|&&s| s <= 0.0).count();
    let needed = (first.slopes.len() * 7).div_ceil(10);
    let slopes: Vec<String> = first.slopes.iter().map(|s| format!("{s:.3}")).collect();
    let soft = if first.ratio >= 1.05 { "met" } else { "not met" };
    let c8 = verdict(
        first.ratio >= 1.0 && non_increasing >= needed && first.seconds < 1800.0,
        format!(
            "greedy/rl geometric mean {:.4} (soft target 1.05 {soft}); stage slopes [{}], {non_increasing}/{} <= 0 (need {needed}); {:.1}s",
            first.ratio,
            slopes.join(", "),
            first.slopes.len(),
            first.seconds
        ),
    );
    let differing: Vec<&str> = first
        .files
        .iter()
        .zip(&second.files)
        .filter(|(a, b)| a.1 != b.1)
        .map(|(a, _)| a.0.as_str())
        .collect();
    let c9 = verdict(
        differing.is_empty(),
        format!("{} artifacts compared, differing: {:?}", first.files.len(), differing),
    );
    (c8, c9)
}

fn criterion_10() -> Verdict {
    let grid = Grid::full();
    let n = grid.configs().len();
    let sample = grid.sample(31, 10).unwrap();
    let mut idx: Vec<usize> = sample.iter().map(|c| c.index).collect();
    idx.sort_unstable();
    idx.dedup();
    let curriculum = build_curriculum(&desk_curriculum(), 900).unwrap();
    let validation = build_curriculum(&desk_validation(), 950).unwrap();
    let base = HyperParams { hidden: 8, rounds: 1, ..Default::default() };
    let results =
        agent::hyperparameter_sweep(&grid, 2, &curriculum[..2], &validation[..3], &base, 10).unwrap();
    let csv = ex::sweep_csv(&results);
    let mut lines = csv.lines();
    let schema_ok = lines.next() == Some(rlcg_core::cg::CSV_HEADER)
        && lines.next() == Some(ex::SWEEP_COLUMNS)
        && lines.clone().count() == 2
        && lines.all(|l| l.split(',').count() == ex::SWEEP_COLUMNS.split(',').count())
        && results.iter().all(|r| r.mean_ratio.is_finite());
    verdict(
        n == 81 && idx.len() == 31 && schema_ok,
        format!("grid size {n}, {} distinct of 31 sampled, report schema ok={schema_ok}", idx.len()),
    )
}

/// Writes straight to the process stderr so the line survives libtest's output capture.
fn report(id: u32, name: &str, v: &Verdict, seconds: f64) {
    let status = if v.passed { "PASS" } else { "FAIL" };
    let line = format!("criterion {id:>2} [{status}] {name}: {} ({seconds:.1}s)\n", v.detail);
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(v.passed, "criterion {id} failed: {}", v.detail);
}

fn shared<T>(cell: &'static OnceLock<(T, T, f64)>, f: fn() -> (T, T)) -> &'static (T, T, f64) {
    cell.get_or_init(|| {
        let t = Instant::now();
        let (a, b) = f();
        (a, b, t.elapsed().as_secs_f64())
    })
}

static LP_SUITE: OnceLock<(Verdict, Verdict, f64)> = OnceLock::new();
static PIPELINE: OnceLock<(Verdict, Verdict, f64)> = OnceLock::new();

fn timed(f: fn() -> Verdict) -> (Verdict, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

#[test]
fn criterion_01_lp_optimum_equivalence() {
    let (v, _, t) = shared(&LP_SUITE, criteria_1_and_3);
    report(1, "LP-optimum equivalence", v, *t);
}

#[test]
fn criterion_02_pricing_oracle() {
    let (v, t) = timed(criterion_2);
    report(2, "pricing oracle equivalence", &v, t);
}

#[test]
fn criterion_03_duality_suite() {
    let (_, v, t) = shared(&LP_SUITE, criteria_1_and_3);
    report(3, "duality suite", v, *t);
}

#[test]
fn criterion_04_gradient_check() {
    let (v, t) = timed(criterion_4);
    report(4, "gradient check", &v, t);
}

#[test]
fn criterion_05_permutation_consistency() {
    let (v, t) = timed(criterion_5);
    report(5, "permutation consistency", &v, t);
}

#[test]
fn criterion_06_reward_identities() {
    let (v, t) = timed(criterion_6);
    report(6, "reward identities", &v, t);
}

#[test]
fn criterion_07_expert_dominance() {
    let (v, t) = timed(criterion_7);
    report(7, "expert dominance", &v, t);
}

#[test]
fn criterion_08_training_efficacy() {
    let (v, _, t) = shared(&PIPELINE, criteria_8_and_9);
    report(8, "training efficacy", v, *t);
}

#[test]
fn criterion_09_determinism() {
    let (_, v, t) = shared(&PIPELINE, criteria_8_and_9);
    report(9, "determinism", v, *t);
}

#[test]
fn criterion_10_sweep_protocol() {
    let (v, t) = timed(criterion_10);
    report(10, "sweep protocol", &v, t);
}
