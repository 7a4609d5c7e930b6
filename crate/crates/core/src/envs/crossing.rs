use nalgebra::dvector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_control, max_entry, stream, Environment, Observation, StepInfo, Transition,
    GEOMETRY_STREAM,
};
use crate::controller::{ControllerConfig, PlantState};
use crate::controller::atacom_step;
use crate::error::{Error, Result};
use crate::manifold::{
    clip_to_bounds, ConstraintSet, ControlAffineSystem, MovingDiskKeepOut, SingleIntegrator,
    SlackModel, Variant,
};
use crate::numgeo::Vector;

/// A robot driving straight along +x while a disk obstacle crosses its path
/// diagonally, first approaching and then receding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossingConfig {
    pub robot_start: [f64; 2],
    pub obstacle_start: [f64; 2],
    pub obstacle_velocity: [f64; 2],
    pub obstacle_radius: f64,
    /// Seeded uniform perturbation applied to the obstacle start.
    pub jitter: f64,
    pub v_max: f64,
    pub dt: f64,
    pub horizon: usize,
}

impl Default for CrossingConfig {
    fn default() -> Self {
        Self {
            robot_start: [0.0, 0.0],
            obstacle_start: [1.0, 0.5],
            obstacle_velocity: [-0.6, -0.6],
            obstacle_radius: 0.2,
            jitter: 0.05,
            v_max: 1.0,
            dt: 0.01,
            horizon: 300,
        }
    }
}

impl CrossingConfig {
    /// Slack model the scenario is tuned for.
    pub fn default_slack() -> SlackModel {
        SlackModel::linear(1.0).expect("valid slack parameters")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.obstacle_radius > 0.0 && self.v_max > 0.0 && self.dt > 0.0)
            || self.horizon == 0
            || !(self.jitter >= 0.0)
        {
            return Err(Error::Parameter(
                "crossing: radius, v_max, dt, horizon must be > 0 and jitter >= 0".into(),
            ));
        }
        Ok(())
    }
}

pub struct Crossing {
    config: CrossingConfig,
    system: SingleIntegrator,
    constraints: ConstraintSet,
    position: Vector,
    obstacle: Vector,
    steps: usize,
}

impl Crossing {
    pub fn new(config: CrossingConfig) -> Result<Self> {
        config.validate()?;
        let mut env = Self {
            system: SingleIntegrator::new(2, config.v_max),
            constraints: ConstraintSet::new().with(MovingDiskKeepOut::new(
                2,
                1,
                config.obstacle_radius,
            )),
            position: Vector::zeros(2),
            obstacle: Vector::zeros(2),
            steps: 0,
            config,
        };
        env.reset(0);
        Ok(env)
    }

    fn obstacle_velocity(&self) -> Vector {
        let [vx, vy] = self.config.obstacle_velocity;
        dvector![vx, vy]
    }

    fn commanded(&self) -> Vector {
        dvector![1.0, 0.0]
    }

    fn target(&self) -> Vector {
        &self.position + self.commanded()
    }
}

impl Environment for Crossing {
    fn name(&self) -> &'static str {
        "crossing"
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = stream(seed, GEOMETRY_STREAM);
        let j = self.config.jitter;
        let mut jitter = || if j > 0.0 { rng.random_range(-j..j) } else { 0.0 };
        let [ox, oy] = self.config.obstacle_start;
        self.obstacle = dvector![ox + jitter(), oy + jitter()];
        let [rx, ry] = self.config.robot_start;
        self.position = dvector![rx, ry];
        self.steps = 0;
        self.observation()
    }

    fn step(&mut self, u_s: &Vector) -> Result<Transition> {
        check_control(u_s, 2)?;
        let (u, _) = clip_to_bounds(u_s, self.system.control_bounds());
        let dt = self.config.dt;
        self.position += u * dt;
        self.obstacle += self.obstacle_velocity() * dt;
        self.steps += 1;
        let k = self.constraint_values();
        let truncated = self.steps >= self.config.horizon;
        Ok(Transition {
            observation: self.observation(),
            reward: 0.0,
            done: truncated,
            info: StepInfo {
                max_violation: max_entry(&k),
                constraint_values: k,
                reached: false,
                truncated,
            },
        })
    }

    fn observation(&self) -> Observation {
        Observation {
            position: self.position.clone(),
            velocity: None,
            target: self.target(),
            obstacles: vec![self.obstacle.clone()],
            obstacle_velocities: vec![self.obstacle_velocity()],
        }
    }

    fn plant_state(&self) -> PlantState {
        PlantState {
            s: self.position.clone(),
            s_dot: None,
            z: Some(self.obstacle.clone()),
            z_dot: Some(self.obstacle_velocity()),
        }
    }

    fn system(&self) -> &dyn ControlAffineSystem {
        &self.system
    }

    fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    fn variant(&self) -> Variant {
        Variant::Separable
    }

    fn dt(&self) -> f64 {
        self.config.dt
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn state_vector(&self) -> Vector {
        self.position.clone()
    }

    fn constraint_values(&self) -> Vector {
        let x = dvector![
            self.position[0],
            self.position[1],
            self.obstacle[0],
            self.obstacle[1]
        ];
        self.constraints.eval_inequality(&x).expect("stacked state")
    }
}

/// Heading statistics of one crossing rollout under the constant action
/// `[1, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingOutcome {
    /// Time at which the raw constraint drift first turns negative after
    /// having been positive (the obstacle starts to recede).
    pub receding_from: Option<f64>,
    /// Time from `receding_from` until the heading error stays within the
    /// tolerance for the rest of the rollout.
    pub recovery_time: Option<f64>,
    pub max_heading_error_deg: f64,
    pub max_violation: f64,
}

/// Runs the crossing scenario and measures how fast the executed heading
/// returns to the commanded one once the obstacle recedes.
pub fn heading_recovery(
    config: &CrossingConfig,
    slack: &SlackModel,
    controller: &ControllerConfig,
    seed: u64,
    tolerance_deg: f64,
) -> Result<CrossingOutcome> {
    let mut env = Crossing::new(config.clone())?;
    env.reset(seed);
    let action = dvector![1.0, 0.0];
    let dt = config.dt;
    let mut was_positive = false;
    let mut receding_from = None;
    let mut last_outside: Option<f64> = None;
    let mut max_err: f64 = 0.0;
    let mut max_violation = f64::NEG_INFINITY;
    for step in 0..config.horizon {
        let t = step as f64 * dt;
        let out = atacom_step(
            env.variant(),
            env.system(),
            env.constraints(),
            slack,
            &env.plant_state(),
            &action,
            controller,
        )?;
        let psi = out.assembly.psi[0];
        if psi > 0.0 {
            was_positive = true;
        } else if psi < 0.0 && was_positive && receding_from.is_none() {
            receding_from = Some(t);
        }
        let u = &out.action.u_s;
        let err = u[1].atan2(u[0]).abs().to_degrees();
        max_err = max_err.max(err);
        if err > tolerance_deg {
            last_outside = Some(t);
        }
        let tr = env.step(u)?;
        max_violation = max_violation.max(tr.info.max_violation);
    }
    let recovery_time = receding_from.map(|t0| match last_outside {
        Some(t) if t >= t0 => t + dt - t0,
        _ => 0.0,
    });
    Ok(CrossingOutcome {
        receding_from,
        recovery_time,
        max_heading_error_deg: max_err,
        max_violation,
    })
}
