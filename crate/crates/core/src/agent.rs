//! DQN training: experience replay, epsilon-greedy exploration, curriculum
//! episodes with periodic validation, and the random hyperparameter sweep.

use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cg::{run_cg, CgEnv, CgError, EnvConfig, DEFAULT_MAX_ITERS};
use crate::instances::Instance;
use crate::policies::{argmax, Policy};
use crate::qnet::{NetError, Sample};
use crate::rng::SplitMix64;
use crate::state::BipartiteState;
use crate::stats;
use crate::QNetwork;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("environment: {0}")]
    Env(#[from] CgError),
    #[error("network: {0}")]
    Net(#[from] NetError),
    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("curriculum is empty")]
    EmptyCurriculum,
    #[error("requested {requested} configurations but the grid has {available}")]
    TooManySamples { requested: usize, available: usize },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Weight of the normalized objective decrease in the reward.
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub k_candidates: usize,
    pub hidden: usize,
    pub rounds: usize,
    /// Re-sync period of a frozen target network; `None` bootstraps from the online network.
    pub target_sync: Option<usize>,
    pub max_iters: usize,
    /// Minibatch updates after each environment step.
    #[serde(default = "one")]
    pub updates_per_step: usize,
}

fn one() -> usize {
    1
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 300.0,
            epsilon: 0.05,
            gamma: 0.9,
            lr: 0.001,
            batch_size: 32,
            replay_capacity: 10_000,
            k_candidates: crate::pricing::DEFAULT_K,
            hidden: crate::qnet::DEFAULT_HIDDEN,
            rounds: crate::qnet::DEFAULT_ROUNDS,
            target_sync: None,
            max_iters: DEFAULT_MAX_ITERS,
            updates_per_step: 1,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidHyper(m.to_string()));
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative");
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.k_candidates == 0 {
            return bad("batch size, replay capacity and k must be positive");
        }
        if self.hidden == 0 || self.rounds == 0 || self.max_iters == 0 || self.updates_per_step == 0 {
            return bad("hidden width, rounds, max_iters and updates per step must be positive");
        }
        if self.target_sync == Some(0) {
            return bad("target sync period must be positive");
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig { k: self.k_candidates, alpha: self.alpha, ..EnvConfig::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Arc<BipartiteState>,
    pub action: usize,
    pub reward: f64,
    /// `None` is the terminal marker.
    pub next_state: Option<Arc<BipartiteState>>,
    pub done: bool,
}

/// Fixed-capacity FIFO ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "replay capacity must be positive");
        Self { capacity, items: VecDeque::with_capacity(capacity.min(4096)) }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    /// `n` draws, uniform with replacement.
    pub fn sample(&self, n: usize, rng: &mut SplitMix64) -> Result<Vec<&T>, AgentError> {
        if self.items.is_empty() {
            return Err(AgentError::EmptyBuffer);
        }
        Ok((0..n).map(|_| &self.items[rng.index(self.items.len())]).collect())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

/// Uniform action with probability `epsilon`, otherwise the argmax of Q.
pub fn epsilon_greedy_select(
    net: &QNetwork,
    state: &BipartiteState,
    epsilon: f64,
    rng: &mut SplitMix64,
) -> Result<usize, AgentError> {
    let n = state.num_actions();
    if n == 0 {
        return Err(NetError::NoActions.into());
    }
    if n == 1 {
        return Ok(0);
    }
    if rng.next_f64() < epsilon {
        return Ok(rng.index(n));
    }
    let q = net.forward(state)?;
    Ok(argmax(&q).expect("non-empty"))
}

/// `r` for terminal transitions, `r + gamma * max_a Q(s', a)` otherwise.
pub fn compute_target(net: &QNetwork, t: &Transition, gamma: f64) -> Result<f64, AgentError> {
    match (&t.next_state, t.done) {
        (Some(next), false) => {
            let q = net.forward(next)?;
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(t.reward + gamma * best)
        }
        _ => Ok(t.reward),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub instance_name: String,
    /// Master solves, i.e. actions taken plus one.
    pub iterations: usize,
    pub steps: usize,
    pub total_reward: f64,
    pub obj_first: f64,
    pub obj_last: f64,
    pub losses: Vec<f64>,
}

impl EpisodeLog {
    pub fn mean_loss(&self) -> f64 {
        if self.losses.is_empty() {
            0.0
        } else {
            stats::mean(&self.losses)
        }
    }
}

/// Online network, optional frozen target, replay memory and exploration stream.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: QNetwork,
    target: Option<QNetwork>,
    pub buffer: ReplayBuffer<Transition>,
    rng: SplitMix64,
    pub hyper: HyperParams,
    gradient_steps: usize,
}

impl Trainer {
    pub fn new(hyper: HyperParams, seed: u64) -> Result<Self, AgentError> {
        hyper.validate()?;
        let mut master = SplitMix64::new(seed);
        let net = QNetwork::new(hyper.hidden, hyper.rounds, master.next_u64());
        let target = hyper.target_sync.map(|_| net.clone());
        Ok(Self {
            target,
            buffer: ReplayBuffer::new(hyper.replay_capacity),
            rng: master.fork(),
            net,
            hyper,
            gradient_steps: 0,
        })
    }

    /// One gradient step on a replayed minibatch.
    fn learn(&mut self) -> Result<f64, AgentError> {
        let batch: Vec<Transition> = self
            .buffer
            .sample(self.hyper.batch_size, &mut self.rng)?
            .into_iter()
            .cloned()
            .collect();
        let bootstrap = self.target.as_ref().unwrap_or(&self.net);
        let targets = batch
            .iter()
            .map(|t| compute_target(bootstrap, t, self.hyper.gamma))
            .collect::<Result<Vec<_>, _>>()?;
        let samples: Vec<Sample<'_>> = batch
            .iter()
            .zip(&targets)
            .map(|(t, &target)| Sample { state: &t.state, action: t.action, target })
            .collect();
        let (loss, grads) = self.net.loss_and_grad(&samples)?;
        self.net.adam_step(&grads, self.hyper.lr);
        self.gradient_steps += 1;
        if let (Some(period), Some(target)) = (self.hyper.target_sync, self.target.as_mut()) {
            if self.gradient_steps % period == 0 {
                *target = self.net.clone();
            }
        }
        Ok(loss)
    }

    /// Solves one instance with epsilon-greedy actions, learning after every step.
    pub fn train_episode(&mut self, instance: &Instance) -> Result<EpisodeLog, AgentError> {
        let mut env = CgEnv::reset(instance, self.hyper.env_config())?;
        let mut state = env.observe().cloned().map(Arc::new);
        let mut total_reward = 0.0;
        let mut losses = Vec::new();
        let mut steps = 0;
        while let Some(s) = state {
            if steps >= self.hyper.max_iters {
                break;
            }
            let action = epsilon_greedy_select(&self.net, &s, self.hyper.epsilon, &mut self.rng)?;
            let out = env.step(action)?;
            total_reward += out.reward;
            let next = out.next_state.map(Arc::new);
            self.buffer.push(Transition {
                state: s,
                action,
                reward: out.reward,
                next_state: next.clone(),
                done: out.done,
            });
            if self.buffer.len() >= self.hyper.batch_size {
                for _ in 0..self.hyper.updates_per_step {
                    losses.push(self.learn()?);
                }
            }
            state = next;
            steps += 1;
        }
        let rmp = env.rmp();
        Ok(EpisodeLog {
            instance_name: instance.name.clone(),
            iterations: rmp.iteration + 1,
            steps,
            total_reward,
            obj_first: rmp.obj_history[0],
            obj_last: rmp.objective(),
            losses,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRecord {
    pub episode: usize,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub network: QNetwork,
    pub hyper: HyperParams,
    pub training_log: Vec<EpisodeLog>,
    pub validation_log: Vec<ValidationRecord>,
}

/// Master solves needed by the greedy rule on each instance.
pub fn greedy_iterations(instances: &[Instance], hyper: &HyperParams) -> Result<Vec<usize>, AgentError> {
    instances
        .iter()
        .map(|i| Ok(run_cg(i, &Policy::Greedy, &hyper.env_config(), hyper.max_iters)?.iterations))
        .collect()
}

/// Per-instance `greedy_iterations / rl_iterations` with the network acting greedily.
pub fn iteration_ratios(
    net: &QNetwork,
    instances: &[Instance],
    greedy: &[usize],
    hyper: &HyperParams,
) -> Result<(Vec<f64>, Vec<usize>), AgentError> {
    let policy = Policy::Rl(Box::new(net.clone()));
    let mut ratios = Vec::with_capacity(instances.len());
    let mut iters = Vec::with_capacity(instances.len());
    for (inst, &g) in instances.iter().zip(greedy) {
        let run = run_cg(inst, &policy, &hyper.env_config(), hyper.max_iters)?;
        ratios.push(g as f64 / run.iterations as f64);
        iters.push(run.iterations);
    }
    Ok((ratios, iters))
}

/// One episode per curriculum instance, in order, validating every `validate_every` episodes.
pub fn train_curriculum(
    curriculum: &[Instance],
    hyper: &HyperParams,
    validation: &[Instance],
    validate_every: usize,
    seed: u64,
) -> Result<TrainingOutcome, AgentError> {
    if curriculum.is_empty() {
        return Err(AgentError::EmptyCurriculum);
    }
    let mut trainer = Trainer::new(hyper.clone(), seed)?;
    let greedy = if validation.is_empty() || validate_every == 0 {
        Vec::new()
    } else {
        greedy_iterations(validation, hyper)?
    };
    let mut training_log = Vec::with_capacity(curriculum.len());
    let mut validation_log = Vec::new();
    for (e, instance) in curriculum.iter().enumerate() {
        training_log.push(trainer.train_episode(instance)?);
        let episode = e + 1;
        if !greedy.is_empty() && episode % validate_every == 0 {
            let (ratios, iters) = iteration_ratios(&trainer.net, validation, &greedy, hyper)?;
            let iters: Vec<f64> = iters.into_iter().map(|i| i as f64).collect();
            validation_log.push(ValidationRecord {
                episode,
                mean_ratio: stats::mean(&ratios),
                std_ratio: stats::std_dev(&ratios),
                mean_iterations: stats::mean(&iters),
            });
        }
    }
    Ok(TrainingOutcome { network: trainer.net, hyper: hyper.clone(), training_log, validation_log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub alphas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub gammas: Vec<f64>,
    pub lrs: Vec<f64>,
}

impl Grid {
    /// alpha x epsilon x gamma x lr = 3 x 3 x 3 x 3.
    pub fn full() -> Self {
        Self {
            alphas: vec![0.0, 100.0, 300.0],
            epsilons: vec![0.01, 0.05, 0.2],
            gammas: vec![0.9, 0.95, 0.99],
            lrs: vec![0.01, 1e-3, 3e-4],
        }
    }

    pub fn len(&self) -> usize {
        self.alphas.len() * self.epsilons.len() * self.gammas.len() * self.lrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cartesian product with `lr` varying fastest.
    pub fn configs(&self) -> Vec<SweepConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &alpha in &self.alphas {
            for &epsilon in &self.epsilons {
                for &gamma in &self.gammas {
                    for &lr in &self.lrs {
                        out.push(SweepConfig { index: out.len(), alpha, epsilon, gamma, lr });
                    }
                }
            }
        }
        out
    }

    /// `n` distinct configurations drawn without replacement (partial Fisher-Yates).
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<SweepConfig>, AgentError> {
        if self.is_empty() {
            return Err(AgentError::EmptyGrid);
        }
        let mut all = self.configs();
        if n > all.len() {
            return Err(AgentError::TooManySamples { requested: n, available: all.len() });
        }
        let mut rng = SplitMix64::new(seed);
        for i in 0..n {
            let j = i + rng.index(all.len() - i);
            all.swap(i, j);
        }
        all.truncate(n);
        Ok(all)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Position in the full Cartesian product.
    pub index: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub lr: f64,
}

impl SweepConfig {
    pub fn apply(&self, base: &HyperParams) -> HyperParams {
        HyperParams { alpha: self.alpha, epsilon: self.epsilon, gamma: self.gamma, lr: self.lr, ..base.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rank: usize,
    pub config: SweepConfig,
    pub mean_ratio: f64,
    pub median_ratio: f64,
    pub std_ratio: f64,
    pub ratios: Vec<f64>,
}

/// Trains each sampled configuration on the curriculum and ranks them by
/// mean validation ratio, best (largest) first.
pub fn hyperparameter_sweep(
    grid: &Grid,
    n_samples: usize,
    curriculum: &[Instance],
    validation: &[Instance],
    base: &HyperParams,
    seed: u64,
) -> Result<Vec<SweepResult>, AgentError> {
    let configs = grid.sample(n_samples, seed)?;
    let greedy = greedy_iterations(validation, base)?;
    let run = |c: &SweepConfig| -> Result<SweepResult, AgentError> {
        let hyper = c.apply(base);
        let net = if curriculum.is_empty() {
            Trainer::new(hyper.clone(), seed.wrapping_add(c.index as u64))?.net
        } else {
            train_curriculum(curriculum, &hyper, &[], 0, seed.wrapping_add(c.index as u64))?.network
        };
        let (ratios, _) = iteration_ratios(&net, validation, &greedy, &hyper)?;
        Ok(SweepResult {
            rank: 0,
            config: *c,
            mean_ratio: stats::mean(&ratios),
            median_ratio: stats::median(&ratios),
            std_ratio: stats::std_dev(&ratios),
            ratios,
        })
    };
    let mut results = crate::thread_pool().install(|| configs.par_iter().map(run).collect::<Result<Vec<_>, _>>())?;
    results.sort_by(|a, b| b.mean_ratio.total_cmp(&a.mean_ratio).then(a.config.index.cmp(&b.config.index)));
    for (i, r) in results.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(results)
}
