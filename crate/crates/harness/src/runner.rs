use atacom::envs::{run_episode, EpisodeResult};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

/// Aggregate metrics of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_length: f64,
    /// Mean over episodes of the per-episode mean positive violation.
    pub mean_violation: f64,
    pub max_violation: f64,
    pub violating_episodes: usize,
    pub mean_return: f64,
    pub mean_undiscounted_return: f64,
    pub max_tangency_residual: f64,
    pub faults: usize,
}

impl Summary {
    pub fn from_episodes(episodes: &[EpisodeResult]) -> Self {
        let n = episodes.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EpisodeResult) -> f64| episodes.iter().map(f).sum::<f64>() / n;
        Self {
            episodes: episodes.len(),
            success_rate: mean(&|e| e.success as u8 as f64),
            mean_length: mean(&|e| e.steps as f64),
            mean_violation: mean(&|e| e.mean_violation),
            max_violation: episodes
                .iter()
                .map(|e| e.max_violation)
                .fold(f64::NEG_INFINITY, f64::max),
            violating_episodes: episodes.iter().filter(|e| e.violation_steps > 0).count(),
            mean_return: mean(&|e| e.discounted_return),
            mean_undiscounted_return: mean(&|e| e.undiscounted_return),
            max_tangency_residual: episodes
                .iter()
                .map(|e| e.max_tangency_residual)
                .fold(0.0, f64::max),
            faults: episodes.iter().filter(|e| e.fault.is_some()).count(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub summary: Summary,
    pub episodes: Vec<EpisodeResult>,
}

/// Runs one episode with fresh environment, controller and policy.
pub fn run_single(config: &ExperimentConfig, index: usize, keep_records: bool) -> Result<EpisodeResult> {
    let mut env = config.build_env()?;
    let controller = config.build_controller(env.as_ref())?;
    let mut policy = config.build_policy();
    let seed = config.seed.wrapping_add(index as u64);
    Ok(run_episode(
        env.as_mut(),
        policy.as_mut(),
        &controller,
        seed,
        config.gamma,
        keep_records,
    ))
}

/// Runs all episodes of `config`. Episode `i` uses seed `seed + i` and owns
/// its state, so the result does not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig, keep_records: bool) -> Result<ExperimentRun> {
    config.validate()?;
    let episodes = (0..config.episodes)
        .into_par_iter()
        .map(|i| run_single(config, i, keep_records))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentRun {
        summary: Summary::from_episodes(&episodes),
        episodes,
    })
}

/// Runs `f` on a pool of `threads` workers (`None` keeps the global pool).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(HarnessError::Validation("--parallel: must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| HarnessError::Validation(format!("--parallel: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
