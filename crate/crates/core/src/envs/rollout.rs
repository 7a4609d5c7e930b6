use serde::Serialize;

use super::{episode_success, Environment, Policy, VIOLATION_THRESHOLD};
use crate::controller::AtacomController;
use crate::numgeo::Vector;
use crate::verify::lyapunov_value;

/// One control period of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// Plant state before the step.
    pub state: Vector,
    pub action: Vector,
    pub u_s: Vector,
    /// Manifold residual at the start of the step.
    pub c: Vector,
    pub v: f64,
    /// `max_i k_i` after the step.
    pub max_violation: f64,
    pub saturated: bool,
    pub tangency_residual: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub steps: usize,
    pub reached: bool,
    pub success: bool,
    pub violation_steps: usize,
    /// Largest `k_i` seen over the episode.
    pub max_violation: f64,
    /// Mean over steps of `max(0, max_i k_i)`.
    pub mean_violation: f64,
    pub discounted_return: f64,
    pub undiscounted_return: f64,
    /// Largest tangency residual over unsaturated steps.
    pub max_tangency_residual: f64,
    pub saturated_steps: usize,
    pub fault: Option<String>,
    #[serde(skip)]
    pub records: Vec<StepRecord>,
}

/// Runs one episode: reset with `seed`, then policy, controller and plant in
/// lock step until the environment reports `done` or a fault occurs.
pub fn run_episode(
    env: &mut dyn Environment,
    policy: &mut dyn Policy,
    controller: &AtacomController,
    seed: u64,
    gamma: f64,
    keep_records: bool,
) -> EpisodeResult {
    let mut obs = env.reset(seed);
    policy.reset(seed);
    let action_dim = controller.action_dim(env.system(), env.constraints());
    let dt = env.dt();
    let mut res = EpisodeResult {
        seed,
        steps: 0,
        reached: false,
        success: false,
        violation_steps: 0,
        max_violation: super::max_entry(&env.constraint_values()),
        mean_violation: 0.0,
        discounted_return: 0.0,
        undiscounted_return: 0.0,
        max_tangency_residual: 0.0,
        saturated_steps: 0,
        fault: None,
        records: Vec::new(),
    };
    let mut discount = 1.0;
    let mut violation_sum = 0.0;
    for step in 0..env.horizon() {
        let action = policy.act(&obs, action_dim);
        let out = match controller.step(env.system(), env.constraints(), &env.plant_state(), &action) {
            Ok(out) => out,
            Err(e) => {
                res.fault = Some(e.to_string());
                break;
            }
        };
        let state = env.state_vector();
        let tr = match env.step(&out.action.u_s) {
            Ok(tr) => tr,
            Err(e) => {
                res.fault = Some(e.to_string());
                break;
            }
        };
        res.steps += 1;
        res.discounted_return += discount * tr.reward;
        res.undiscounted_return += tr.reward;
        discount *= gamma;
        res.max_violation = res.max_violation.max(tr.info.max_violation);
        violation_sum += tr.info.max_violation.max(0.0);
        if tr.info.max_violation > VIOLATION_THRESHOLD {
            res.violation_steps += 1;
        }
        if out.action.saturated {
            res.saturated_steps += 1;
        } else {
            res.max_tangency_residual = res.max_tangency_residual.max(out.tangency_residual);
        }
        if keep_records {
            res.records.push(StepRecord {
                t: step as f64 * dt,
                state,
                action,
                u_s: out.action.u_s.clone(),
                v: lyapunov_value(&out.assembly.c),
                c: out.assembly.c,
                max_violation: tr.info.max_violation,
                saturated: out.action.saturated,
                tangency_residual: out.tangency_residual,
                reward: tr.reward,
            });
        }
        res.reached |= tr.info.reached;
        obs = tr.observation;
        if tr.done {
            break;
        }
    }
    if res.steps > 0 {
        res.mean_violation = violation_sum / res.steps as f64;
    }
    res.success = res.fault.is_none() && episode_success(res.reached, res.violation_steps);
    res
}
