//! Batch evaluation and the CSV artifacts written by the command line tool.
//!
//! Every CSV starts with the `# rlcg-csv v1` comment line followed by a
//! header row. Floats are written with Rust's shortest round-trip format,
//! so a file is a pure function of the records it was built from.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::agent::{AgentError, EpisodeLog, SweepResult, ValidationRecord};
use crate::cg::{normalize_trajectory, run_cg, CgError, EnvConfig, CSV_HEADER};
use crate::instances::{load_bpplib, Instance};
use crate::policies::Policy;
use crate::stats;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot load instance {path}: {reason}")]
    Instance { path: PathBuf, reason: String },
    #[error("malformed csv at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("no records")]
    Empty,
    #[error("{0}")]
    Cg(#[from] CgError),
    #[error("{0}")]
    Agent(#[from] AgentError),
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub instance_name: String,
    pub policy: String,
    pub iterations: usize,
    pub wall_time_seconds: f64,
    pub objective: f64,
    pub trajectory: Vec<f64>,
}

/// Runs every policy on every instance. Output is grouped by policy, then
/// instance, in input order regardless of how work is scheduled.
///
/// With `timing` off, wall time is recorded as zero so repeated runs give
/// identical files.
pub fn evaluate(
    instances: &[Instance],
    policies: &[Policy],
    config: &EnvConfig,
    max_iters: usize,
    timing: bool,
) -> Result<Vec<RunRecord>, ExperimentError> {
    let jobs: Vec<(&Policy, &Instance)> =
        policies.iter().flat_map(|p| instances.iter().map(move |i| (p, i))).collect();
    let run = |(policy, instance): &(&Policy, &Instance)| -> Result<RunRecord, CgError> {
        let r = run_cg(instance, policy, config, max_iters)?;
        Ok(RunRecord {
            instance_name: instance.name.clone(),
            policy: policy.name().to_string(),
            iterations: r.iterations,
            wall_time_seconds: if timing { r.wall_time.as_secs_f64() } else { 0.0 },
            objective: r.objective,
            trajectory: r.trajectory,
        })
    };
    let records = crate::thread_pool().install(|| jobs.par_iter().map(run).collect::<Result<Vec<_>, _>>())?;
    Ok(records)
}

/// Policies in order of first appearance.
pub fn policy_names(records: &[RunRecord]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for r in records {
        if !names.contains(&r.policy) {
            names.push(r.policy.clone());
        }
    }
    names
}

fn for_policy<'a>(records: &'a [RunRecord], policy: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
    records.iter().filter(move |r| r.policy == policy)
}

pub const RUNS_COLUMNS: &str = "instance_name,policy,iterations,wall_time_seconds,objective";

pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut out = format!("{CSV_HEADER}\n{RUNS_COLUMNS}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.instance_name, r.policy, r.iterations, r.wall_time_seconds, r.objective
        );
    }
    out
}

/// Strips the version line and checks the header row.
fn csv_body<'a>(text: &'a str, columns: &str) -> Result<Vec<(usize, Vec<&'a str>)>, ExperimentError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == CSV_HEADER => {}
        Some((i, _)) => return Err(ExperimentError::Csv { line: i + 1, reason: format!("expected `{CSV_HEADER}`") }),
        None => return Err(ExperimentError::Empty),
    }
    match lines.next() {
        Some((_, l)) if l.trim() == columns => {}
        Some((i, l)) => {
            return Err(ExperimentError::Csv { line: i + 1, reason: format!("unexpected header `{}`", l.trim()) })
        }
        None => return Err(ExperimentError::Empty),
    }
    let width = columns.split(',').count();
    let mut rows = Vec::new();
    for (i, l) in lines {
        let fields: Vec<&str> = l.trim().split(',').collect();
        if fields.len() != width {
            return Err(ExperimentError::Csv {
                line: i + 1,
                reason: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(line: usize, text: &str, name: &str) -> Result<T, ExperimentError> {
    text.parse().map_err(|_| ExperimentError::Csv { line, reason: format!("bad {name} `{text}`") })
}

/// Reads a runs CSV back; trajectories are not stored there and come back empty.
pub fn parse_runs_csv(text: &str) -> Result<Vec<RunRecord>, ExperimentError> {
    let rows = csv_body(text, RUNS_COLUMNS)?;
    if rows.is_empty() {
        return Err(ExperimentError::Empty);
    }
    rows.into_iter()
        .map(|(line, f)| {
            Ok(RunRecord {
                instance_name: f[0].to_string(),
                policy: f[1].to_string(),
                iterations: field(line, f[2], "iterations")?,
                wall_time_seconds: field(line, f[3], "wall_time_seconds")?,
                objective: field(line, f[4], "objective")?,
                trajectory: Vec::new(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub count: usize,
    pub iterations_mean: f64,
    pub iterations_median: f64,
    pub iterations_std: f64,
    pub time_mean: f64,
    pub time_median: f64,
    pub time_std: f64,
}

pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    policy_names(records)
        .into_iter()
        .map(|policy| {
            let iters: Vec<f64> = for_policy(records, &policy).map(|r| r.iterations as f64).collect();
            let times: Vec<f64> = for_policy(records, &policy).map(|r| r.wall_time_seconds).collect();
            SummaryRow {
                count: iters.len(),
                iterations_mean: stats::mean(&iters),
                iterations_median: stats::median(&iters),
                iterations_std: stats::std_dev(&iters),
                time_mean: stats::mean(&times),
                time_median: stats::median(&times),
                time_std: stats::std_dev(&times),
                policy,
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{CSV_HEADER}\npolicy,count,iterations_mean,iterations_median,iterations_std,time_mean,time_median,time_std\n"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.policy,
            r.count,
            r.iterations_mean,
            r.iterations_median,
            r.iterations_std,
            r.time_mean,
            r.time_median,
            r.time_std
        );
    }
    out
}

/// Geometric mean over shared instances of `iterations(numerator) / iterations(denominator)`.
pub fn geometric_mean_ratio(records: &[RunRecord], numerator: &str, denominator: &str) -> Option<f64> {
    let ratios: Vec<f64> = for_policy(records, numerator)
        .filter_map(|n| {
            for_policy(records, denominator)
                .find(|d| d.instance_name == n.instance_name)
                .map(|d| n.iterations as f64 / d.iterations as f64)
        })
        .collect();
    (!ratios.is_empty()).then(|| stats::geometric_mean(&ratios))
}

/// Every non-greedy policy against greedy, in both directions.
pub fn ratios_csv(records: &[RunRecord]) -> String {
    let mut out = format!("{CSV_HEADER}\npolicy,baseline,geomean_policy_over_baseline,geomean_baseline_over_policy\n");
    for p in policy_names(records).iter().filter(|p| p.as_str() != "greedy") {
        if let (Some(a), Some(b)) =
            (geometric_mean_ratio(records, p, "greedy"), geometric_mean_ratio(records, "greedy", p))
        {
            let _ = writeln!(out, "{p},greedy,{a},{b}");
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePoint {
    pub policy: String,
    pub iteration: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mean and spread of normalized trajectories per policy. Shorter runs are
/// padded with their final value, zero.
pub fn convergence(records: &[RunRecord]) -> Vec<ConvergencePoint> {
    let mut out = Vec::new();
    for policy in policy_names(records) {
        let trajs: Vec<Vec<f64>> =
            for_policy(records, &policy).map(|r| normalize_trajectory(&r.trajectory)).collect();
        let len = trajs.iter().map(Vec::len).max().unwrap_or(0);
        for t in 0..len {
            let col: Vec<f64> = trajs.iter().map(|tr| tr.get(t).copied().unwrap_or(0.0)).collect();
            out.push(ConvergencePoint {
                policy: policy.clone(),
                iteration: t,
                mean: stats::mean(&col),
                std: stats::std_dev(&col),
            });
        }
    }
    out
}

pub const CONVERGENCE_COLUMNS: &str = "policy,iteration,mean_normalized_objective,std_normalized_objective";

pub fn convergence_csv(points: &[ConvergencePoint]) -> String {
    let mut out = format!("{CSV_HEADER}\n{CONVERGENCE_COLUMNS}\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.policy, p.iteration, p.mean, p.std);
    }
    out
}

pub fn parse_convergence_csv(text: &str) -> Result<Vec<ConvergencePoint>, ExperimentError> {
    csv_body(text, CONVERGENCE_COLUMNS)?
        .into_iter()
        .map(|(line, f)| {
            Ok(ConvergencePoint {
                policy: f[0].to_string(),
                iteration: field(line, f[1], "iteration")?,
                mean: field(line, f[2], "mean")?,
                std: field(line, f[3], "std")?,
            })
        })
        .collect()
}

pub fn training_log_csv(log: &[EpisodeLog]) -> String {
    let mut out = format!("{CSV_HEADER}\nepisode,instance_name,iterations,total_reward,mean_loss\n");
    for (e, l) in log.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{},{}", e + 1, l.instance_name, l.iterations, l.total_reward, l.mean_loss());
    }
    out
}

pub fn validation_log_csv(log: &[ValidationRecord]) -> String {
    let mut out = format!("{CSV_HEADER}\nepisode,mean_ratio,std_ratio\n");
    for v in log {
        let _ = writeln!(out, "{},{},{}", v.episode, v.mean_ratio, v.std_ratio);
    }
    out
}

pub const SWEEP_COLUMNS: &str = "rank,config_index,alpha,epsilon,gamma,lr,mean_ratio,median_ratio,std_ratio";

pub fn sweep_csv(results: &[SweepResult]) -> String {
    let mut out = format!("{CSV_HEADER}\n{SWEEP_COLUMNS}\n");
    for r in results {
        let c = &r.config;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.rank, c.index, c.alpha, c.epsilon, c.gamma, c.lr, r.mean_ratio, r.median_ratio, r.std_ratio
        );
    }
    out
}

/// Least-squares slope of training iterations within each stage.
pub fn stage_slopes(log: &[EpisodeLog], stage_of: &[usize]) -> Vec<f64> {
    let stages = stage_of.iter().copied().max().map_or(0, |m| m + 1);
    (0..stages)
        .map(|s| {
            let ys: Vec<f64> = log
                .iter()
                .zip(stage_of)
                .filter(|(_, &st)| st == s)
                .map(|(l, _)| l.iterations as f64)
                .collect();
            stats::linear_slope(&ys)
        })
        .collect()
}

pub fn stage_slopes_csv(slopes: &[f64]) -> String {
    let mut out = format!("{CSV_HEADER}\nstage,iteration_slope\n");
    for (i, s) in slopes.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, s);
    }
    out
}

/// Name of the file listing instance files in curriculum order.
pub const MANIFEST: &str = "manifest.txt";
/// Name of the optional stage file written next to a generated curriculum.
pub const STAGES_FILE: &str = "stages.txt";

/// Writes each instance as `<name>.txt` plus a manifest preserving the order.
pub fn write_instances(dir: &Path, instances: &[Instance]) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = String::new();
    let paths = instances
        .iter()
        .map(|inst| {
            let file = format!("{}.txt", inst.name);
            let path = dir.join(&file);
            fs::write(&path, inst.to_bpplib()).map_err(io_err(&path))?;
            manifest.push_str(&file);
            manifest.push('\n');
            Ok(path)
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let m = dir.join(MANIFEST);
    fs::write(&m, manifest).map_err(io_err(&m))?;
    Ok(paths)
}

/// Instance files of a directory: the manifest order when one exists,
/// otherwise every `.txt` file except the bookkeeping ones, sorted by name.
fn instance_files(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let manifest = dir.join(MANIFEST);
    if manifest.is_file() {
        let text = fs::read_to_string(&manifest).map_err(io_err(&manifest))?;
        return Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(|l| dir.join(l)).collect());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .filter(|p| p.file_name().is_some_and(|n| n != MANIFEST && n != STAGES_FILE))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads one instance file or a directory of them.
pub fn load_instances(path: &Path) -> Result<Vec<Instance>, ExperimentError> {
    let files = if path.is_dir() { instance_files(path)? } else { vec![path.to_path_buf()] };
    let instances = files
        .iter()
        .map(|f| {
            load_bpplib(f).map_err(|e| ExperimentError::Instance { path: f.clone(), reason: e.to_string() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if instances.is_empty() {
        return Err(ExperimentError::Empty);
    }
    Ok(instances)
}
