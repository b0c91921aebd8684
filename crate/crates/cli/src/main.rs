use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rlcg_core::agent::{self, Grid, HyperParams, Trainer};
use rlcg_core::cg::{run_cg, trajectory_csv};
use rlcg_core::experiments::{self as ex, RunRecord, STAGES_FILE};
use rlcg_core::instances::{self, build_curriculum, format_stages, parse_stages, stage_of_episode, CurriculumStage};
use rlcg_core::plot::{self, Metric};
use rlcg_core::policies::Policy;
use rlcg_core::qnet::checkpoint::{load_checkpoint, save_checkpoint};

#[derive(Parser)]
#[command(name = "rlcg", version, about = "Column generation for cutting stock with learned column selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write BPPLIB instance files for a preset or a stage specification.
    Generate(GenerateArgs),
    /// Solve one instance and write its run record and objective trajectory.
    Solve(SolveArgs),
    /// Train a Q-network over a curriculum.
    Train(TrainArgs),
    /// Compare policies over a set of instances.
    Evaluate(EvaluateArgs),
    /// Random search over the hyperparameter grid.
    Sweep(SweepArgs),
    /// Render SVG charts from an evaluation directory.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Named preset: full, desk, desk-val or desk-test.
    #[arg(long, conflicts_with_all = ["stages", "stage"])]
    preset: Option<String>,
    /// Stage file with one `count L m frac_min frac_max` per line.
    #[arg(long)]
    stages: Option<PathBuf>,
    /// Inline stage `count L m frac_min frac_max`; repeatable.
    #[arg(long)]
    stage: Vec<String>,
    /// Base seed; instance k uses seed + k. Defaults to the preset's seed, or 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct EnvArgs {
    /// Candidate columns returned by pricing per iteration.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Cap on columns added per solve.
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, default_value = "greedy")]
    policy: String,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    env: EnvArgs,
    /// Record zero wall time so output files are reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Output directory for run.csv and trajectory.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct HyperArgs {
    #[arg(long, default_value_t = 300.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 10_000)]
    replay_capacity: usize,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    rounds: usize,
    /// Gradient steps between target network syncs; omit to bootstrap from the online network.
    #[arg(long)]
    target_sync: Option<usize>,
    /// Minibatch updates per environment step.
    #[arg(long, default_value_t = 1)]
    updates_per_step: usize,
    #[command(flatten)]
    env: EnvArgs,
}

impl HyperArgs {
    fn to_hyper(&self) -> HyperParams {
        HyperParams {
            alpha: self.alpha,
            epsilon: self.epsilon,
            gamma: self.gamma,
            lr: self.lr,
            batch_size: self.batch_size,
            replay_capacity: self.replay_capacity,
            k_candidates: self.env.k,
            hidden: self.hidden,
            rounds: self.rounds,
            target_sync: self.target_sync,
            max_iters: self.env.max_iters,
            updates_per_step: self.updates_per_step,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Curriculum: a preset name or a directory written by `generate`.
    #[arg(long)]
    curriculum: String,
    /// Validation instances: a preset name or a directory.
    #[arg(long)]
    validation: Option<String>,
    #[arg(long, default_value_t = 20)]
    validate_every: usize,
    /// Train on only the first N curriculum instances.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Instance file, directory or preset name.
    #[arg(long)]
    instances: String,
    /// Comma-separated list of greedy, expert, rl.
    #[arg(long, default_value = "greedy,rl")]
    policies: String,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    curriculum: String,
    #[arg(long)]
    validation: String,
    #[arg(long, default_value_t = 31)]
    samples: usize,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = Grid::full().alphas)]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = Grid::full().epsilons)]
    epsilons: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = Grid::full().gammas)]
    gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = Grid::full().lrs)]
    lrs: Vec<f64>,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Directory written by `evaluate`, or a runs CSV.
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn stages_from(args: &GenerateArgs) -> Result<(Vec<CurriculumStage>, u64)> {
    if let Some(name) = &args.preset {
        return Ok(instances::preset(name)?);
    }
    let mut stages = Vec::new();
    if let Some(path) = &args.stages {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        stages.extend(parse_stages(&text)?);
    }
    for s in &args.stage {
        stages.extend(parse_stages(s)?);
    }
    if stages.is_empty() {
        bail!("one of --preset, --stages or --stage is required");
    }
    Ok((stages, 0))
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let (stages, default_seed) = stages_from(&args)?;
    let seed = args.seed.unwrap_or(default_seed);
    let set = build_curriculum(&stages, seed)?;
    let paths = ex::write_instances(&args.out, &set)?;
    write(&args.out.join(STAGES_FILE), format_stages(&stages))?;
    println!("wrote {} instances to {}", paths.len(), args.out.display());
    Ok(())
}

/// Instances plus their stage layout when known.
fn resolve_instances(source: &str) -> Result<(Vec<instances::Instance>, Option<Vec<CurriculumStage>>)> {
    let path = Path::new(source);
    if path.exists() {
        let set = ex::load_instances(path)?;
        let stages_path = path.join(STAGES_FILE);
        let stages = if path.is_dir() && stages_path.is_file() {
            let parsed = parse_stages(&fs::read_to_string(&stages_path)?)?;
            (parsed.iter().map(|s| s.count).sum::<usize>() == set.len()).then_some(parsed)
        } else {
            None
        };
        return Ok((set, stages));
    }
    let (stages, seed) = instances::preset(source).with_context(|| format!("`{source}` is neither a path nor a preset"))?;
    Ok((build_curriculum(&stages, seed)?, Some(stages)))
}

fn load_model(path: &Path) -> Result<Policy> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (net, _) = load_checkpoint::<f64>(&bytes).with_context(|| format!("loading {}", path.display()))?;
    Ok(Policy::Rl(Box::new(net)))
}

fn policy_from(name: &str, model: Option<&Path>) -> Result<Policy> {
    match name {
        "greedy" => Ok(Policy::Greedy),
        "expert" => Ok(Policy::Expert),
        "rl" => match model {
            Some(m) => load_model(m),
            None => bail!("--model is required for policy rl"),
        },
        other => bail!("unknown policy `{other}` (expected greedy, expert or rl)"),
    }
}

fn env_config(env: &EnvArgs) -> HyperParams {
    HyperParams { k_candidates: env.k, max_iters: env.max_iters, ..HyperParams::default() }
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let policy = policy_from(&args.policy, args.model.as_deref())?;
    let instance = instances::load_bpplib(&args.instance)
        .map_err(|e| anyhow::anyhow!("cannot load {}: {e}", args.instance.display()))?;
    let hyper = env_config(&args.env);
    let run = run_cg(&instance, &policy, &hyper.env_config(), hyper.max_iters)?;
    let record = RunRecord {
        instance_name: instance.name.clone(),
        policy: policy.name().to_string(),
        iterations: run.iterations,
        wall_time_seconds: if args.no_timing { 0.0 } else { run.wall_time.as_secs_f64() },
        objective: run.objective,
        trajectory: run.trajectory.clone(),
    };
    write(&args.out.join("run.csv"), ex::runs_csv(std::slice::from_ref(&record)))?;
    write(&args.out.join("trajectory.csv"), trajectory_csv(&run.trajectory))?;
    println!(
        "{} {} iterations={} objective={} converged={}",
        record.instance_name, record.policy, record.iterations, record.objective, run.converged
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let hyper = args.hyper.to_hyper();
    hyper.validate()?;
    let (mut curriculum, stages) = resolve_instances(&args.curriculum)?;
    let limit = args.episodes.unwrap_or(curriculum.len());
    curriculum.truncate(limit);
    let validation = match &args.validation {
        Some(v) => resolve_instances(v)?.0,
        None => Vec::new(),
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let (network, training_log, validation_log) = if curriculum.is_empty() {
        (Trainer::new(hyper.clone(), args.seed)?.net, Vec::new(), Vec::new())
    } else {
        let o = agent::train_curriculum(&curriculum, &hyper, &validation, args.validate_every, args.seed)?;
        (o.network, o.training_log, o.validation_log)
    };
    write(&args.out.join("model.ckpt"), save_checkpoint(&network, &hyper))?;
    write(&args.out.join("training_log.csv"), ex::training_log_csv(&training_log))?;
    write(&args.out.join("validation_log.csv"), ex::validation_log_csv(&validation_log))?;
    if let Some(stages) = stages {
        let mut stage_of = stage_of_episode(&stages);
        stage_of.truncate(training_log.len());
        let slopes = ex::stage_slopes(&training_log, &stage_of);
        write(&args.out.join("stage_slopes.csv"), ex::stage_slopes_csv(&slopes))?;
    }
    println!("trained on {} episodes; checkpoint at {}", training_log.len(), args.out.join("model.ckpt").display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let policies = args
        .policies
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| policy_from(p, args.model.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    if policies.is_empty() {
        bail!("--policies is empty");
    }
    let (set, _) = resolve_instances(&args.instances)?;
    let hyper = env_config(&args.env);
    let records = ex::evaluate(&set, &policies, &hyper.env_config(), hyper.max_iters, !args.no_timing)?;
    write(&args.out.join("runs.csv"), ex::runs_csv(&records))?;
    write(&args.out.join("summary.csv"), ex::summary_csv(&ex::summarize(&records)))?;
    write(&args.out.join("convergence.csv"), ex::convergence_csv(&ex::convergence(&records)))?;
    write(&args.out.join("ratios.csv"), ex::ratios_csv(&records))?;
    for row in ex::summarize(&records) {
        println!("{}: mean iterations {:.2} over {} instances", row.policy, row.iterations_mean, row.count);
    }
    if let Some(r) = ex::geometric_mean_ratio(&records, "greedy", "rl") {
        println!("geometric mean greedy/rl iterations: {r:.4}");
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let grid = Grid { alphas: args.alphas, epsilons: args.epsilons, gammas: args.gammas, lrs: args.lrs };
    if grid.is_empty() {
        bail!("hyperparameter grid is empty");
    }
    let base = args.hyper.to_hyper();
    let (mut curriculum, _) = resolve_instances(&args.curriculum)?;
    if let Some(n) = args.episodes {
        curriculum.truncate(n);
    }
    let (validation, _) = resolve_instances(&args.validation)?;
    let results = agent::hyperparameter_sweep(&grid, args.samples, &curriculum, &validation, &base, args.seed)?;
    write(&args.out, ex::sweep_csv(&results))?;
    if let Some(best) = results.first() {
        let c = best.config;
        println!(
            "best of {}: alpha={} epsilon={} gamma={} lr={} mean_ratio={:.4}",
            results.len(),
            c.alpha,
            c.epsilon,
            c.gamma,
            c.lr,
            best.mean_ratio
        );
    }
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    let (runs_path, conv_path) = if args.input.is_dir() {
        (args.input.join("runs.csv"), Some(args.input.join("convergence.csv")))
    } else {
        (args.input.clone(), args.input.parent().map(|p| p.join("convergence.csv")))
    };
    let text = fs::read_to_string(&runs_path).with_context(|| format!("reading {}", runs_path.display()))?;
    let records = ex::parse_runs_csv(&text).with_context(|| format!("parsing {}", runs_path.display()))?;
    let names = ex::policy_names(&records);
    let mut written = 0;
    if let Some(base) = names.iter().find(|n| n.as_str() == "greedy").or(names.first()) {
        for other in names.iter().filter(|n| *n != base) {
            for metric in [Metric::Iterations, Metric::Time] {
                let file = format!("scatter_{}_{}_vs_{}.svg", metric.label(), other, base);
                write(&args.out.join(file), plot::scatter_svg(&records, base, other, metric))?;
                written += 1;
            }
        }
    }
    write(&args.out.join("box_iterations.svg"), plot::box_svg(&records))?;
    written += 1;
    if let Some(conv) = conv_path.filter(|p| p.is_file()) {
        let points = ex::parse_convergence_csv(&fs::read_to_string(&conv)?)
            .with_context(|| format!("parsing {}", conv.display()))?;
        write(&args.out.join("convergence.svg"), plot::convergence_svg(&points))?;
        written += 1;
    }
    println!("wrote {written} charts to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
