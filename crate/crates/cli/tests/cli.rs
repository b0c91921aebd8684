use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rlcg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlcg")).args(args).env("RLCG_THREADS", "1").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = rlcg(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn count_txt(dir: &Path) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| {
            let p = e.as_ref().unwrap().path();
            p.extension().is_some_and(|x| x == "txt") && !matches!(p.file_name().unwrap().to_str(), Some("manifest.txt" | "stages.txt"))
        })
        .count()
}

fn data_rows(text: &str) -> usize {
    text.lines().filter(|l| !l.starts_with('#')).count() - 1
}

fn tiny_set(dir: &Path, n: usize) {
    let stage = format!("{n} 20 12 0.1 0.7");
    ok(&["generate", "--stage", &stage, "--seed", "3", "--out", s(dir)]);
}

#[test]
fn generate_preset_and_single_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let preset = tmp.path().join("test");
    ok(&["generate", "--preset", "desk-test", "--out", s(&preset)]);
    assert_eq!(count_txt(&preset), 20);
    assert!(preset.join("manifest.txt").is_file());
    assert!(preset.join("stages.txt").is_file());

    let single = tmp.path().join("one");
    ok(&["generate", "--stage", "1 50 10 0.1 0.7", "--out", s(&single)]);
    assert_eq!(count_txt(&single), 1);
}

#[test]
fn invalid_stage_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rlcg(&["generate", "--stage", "2 50 10 0.8 0.2", "--out", s(tmp.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn solve_writes_run_and_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let set = tmp.path().join("set");
    tiny_set(&set, 1);
    let file = fs::read_dir(&set)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| !matches!(p.file_name().unwrap().to_str(), Some("manifest.txt" | "stages.txt")))
        .unwrap();
    let out = tmp.path().join("solve");
    let stdout = ok(&["solve", s(&file), "--policy", "greedy", "--out", s(&out)]).stdout;
    assert!(String::from_utf8_lossy(&stdout).contains("converged=true"));
    assert_eq!(data_rows(&fs::read_to_string(out.join("run.csv")).unwrap()), 1);
    assert!(out.join("trajectory.csv").is_file());

    let missing = rlcg(&["solve", s(&file), "--policy", "rl", "--out", s(&out)]);
    assert!(!missing.status.success());
    let err = String::from_utf8_lossy(&missing.stderr);
    assert_eq!(err.trim_end(), "error: --model is required for policy rl");
}

#[test]
fn train_checkpoints_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let set = tmp.path().join("set");
    tiny_set(&set, 3);
    let common = ["--curriculum", s(&set), "--hidden", "8", "--rounds", "1", "--batch-size", "4", "--seed", "5"];
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&[&["train"][..], &common, &["--out", s(&a)]].concat());
    ok(&[&["train"][..], &common, &["--out", s(&b)]].concat());
    assert_eq!(fs::read(a.join("model.ckpt")).unwrap(), fs::read(b.join("model.ckpt")).unwrap());
    assert_eq!(fs::read(a.join("training_log.csv")).unwrap(), fs::read(b.join("training_log.csv")).unwrap());
    assert!(a.join("stage_slopes.csv").is_file());

    let zero = tmp.path().join("zero");
    ok(&[&["train"][..], &common, &["--episodes", "0", "--out", s(&zero)]].concat());
    assert!(zero.join("model.ckpt").is_file());
    assert_eq!(data_rows(&fs::read_to_string(zero.join("training_log.csv")).unwrap()), 0);

    let eval = tmp.path().join("eval");
    let model = a.join("model.ckpt");
    ok(&["evaluate", "--instances", s(&set), "--policies", "greedy,rl", "--model", s(&model), "--no-timing", "--out", s(&eval)]);
    assert_eq!(data_rows(&fs::read_to_string(eval.join("runs.csv")).unwrap()), 6);
    assert_eq!(data_rows(&fs::read_to_string(eval.join("summary.csv")).unwrap()), 2);
}

#[test]
fn evaluate_and_plot_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let set = tmp.path().join("set");
    tiny_set(&set, 3);
    let runs: Vec<_> = ["e1", "e2"]
        .iter()
        .map(|d| {
            let out = tmp.path().join(d);
            ok(&["evaluate", "--instances", s(&set), "--policies", "greedy,expert", "--no-timing", "--out", s(&out)]);
            out
        })
        .collect();
    for f in ["runs.csv", "summary.csv", "convergence.csv", "ratios.csv"] {
        assert_eq!(fs::read(runs[0].join(f)).unwrap(), fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
    assert_eq!(data_rows(&fs::read_to_string(runs[0].join("runs.csv")).unwrap()), 6);

    let p1 = tmp.path().join("p1");
    let p2 = tmp.path().join("p2");
    ok(&["plot", s(&runs[0]), "--out", s(&p1)]);
    ok(&["plot", s(&runs[1]), "--out", s(&p2)]);
    for f in ["scatter_iterations_expert_vs_greedy.svg", "scatter_time_expert_vs_greedy.svg", "box_iterations.svg", "convergence.svg"] {
        let a = fs::read_to_string(p1.join(f)).unwrap();
        assert!(a.starts_with("<svg"), "{f}");
        assert_eq!(a, fs::read_to_string(p2.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn plot_rejects_empty_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("runs.csv");
    fs::write(&csv, "").unwrap();
    let out = rlcg(&["plot", s(&csv), "--out", s(&tmp.path().join("plots"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

#[test]
fn sweep_single_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let set = tmp.path().join("set");
    tiny_set(&set, 2);
    let csv = tmp.path().join("sweep.csv");
    ok(&[
        "sweep", "--curriculum", s(&set), "--validation", s(&set), "--samples", "1", "--hidden", "8", "--rounds", "1",
        "--batch-size", "4", "--out", s(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(data_rows(&text), 1);
    assert!(text.contains("rank,config_index,alpha,epsilon,gamma,lr,mean_ratio,median_ratio,std_ratio"));
}
