//! Reinforcement-learning-guided column generation for the one-dimensional
//! cutting stock problem.
//!
//! The LP and network layers are generic over [`Scalar`] (`f32` or `f64`);
//! the column generation environment and training loop run in `f64`.

pub mod agent;
pub mod cg;
pub mod experiments;
pub mod instances;
pub mod policies;
pub mod plot;
pub mod pricing;
pub mod qnet;
pub mod rng;
pub mod scalar;
pub mod simplex;
pub mod state;
pub mod stats;

use std::sync::OnceLock;

pub use scalar::Scalar;

pub type LpSolver = simplex::Solver<f64>;
pub type LpSolver32 = simplex::Solver<f32>;
pub type QNetwork = qnet::Network<f64>;
pub type QNetwork32 = qnet::Network<f32>;

/// Environment variable capping the worker threads used by evaluation and sweeps.
pub const THREADS_ENV: &str = "RLCG_THREADS";

/// Shared pool sized by `RLCG_THREADS` (falls back to rayon's default).
pub fn thread_pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool builds")
    })
}
