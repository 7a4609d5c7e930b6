use nalgebra::dvector;
use serde::{Deserialize, Serialize};

use super::{
    check_control, max_entry, sample_point, stream, Environment, Observation, StepInfo,
    Transition, GEOMETRY_STREAM, TARGET_TOLERANCE,
};
use crate::controller::PlantState;
use crate::error::{Error, Result};
use crate::manifold::{
    clip_to_bounds, BoxBounds, ConstraintSet, ControlAffineSystem, DiskKeepOut, SingleIntegrator,
    Variant,
};
use crate::numgeo::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Static2dConfig {
    /// Workspace is `[lower, upper]^2`.
    pub lower: f64,
    pub upper: f64,
    pub obstacle_center: [f64; 2],
    pub obstacle_radius: f64,
    pub v_max: f64,
    pub dt: f64,
    pub horizon: usize,
    /// Clearance from every constraint boundary for sampled starts and targets.
    pub spawn_margin: f64,
    pub min_target_distance: f64,
}

impl Default for Static2dConfig {
    fn default() -> Self {
        Self {
            lower: 0.0,
            upper: 1.0,
            obstacle_center: [0.5, 0.5],
            obstacle_radius: 0.15,
            v_max: 1.0,
            dt: 0.01,
            horizon: 1000,
            spawn_margin: 0.05,
            min_target_distance: 0.2,
        }
    }
}

impl Static2dConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Parameter(format!("static2d: {m}")));
        if !(self.upper - self.lower > 2.0 * self.spawn_margin) {
            return err("workspace must be wider than twice the spawn margin");
        }
        if !(self.obstacle_radius > 0.0) {
            return err("obstacle_radius must be > 0");
        }
        if !(self.v_max > 0.0) {
            return err("v_max must be > 0");
        }
        if !(self.dt > 0.0) {
            return err("dt must be > 0");
        }
        if self.horizon == 0 {
            return err("horizon must be > 0");
        }
        if !(self.spawn_margin >= 0.0 && self.min_target_distance >= 0.0) {
            return err("margins must be >= 0");
        }
        Ok(())
    }
}

/// Velocity-controlled point in a square with one fixed disk obstacle.
pub struct Static2d {
    config: Static2dConfig,
    system: SingleIntegrator,
    constraints: ConstraintSet,
    position: Vector,
    target: Vector,
    steps: usize,
}

impl Static2d {
    pub fn new(config: Static2dConfig) -> Result<Self> {
        config.validate()?;
        let system = SingleIntegrator::new(2, config.v_max);
        let [cx, cy] = config.obstacle_center;
        let constraints = ConstraintSet::new()
            .with(DiskKeepOut::new(dvector![cx, cy], config.obstacle_radius))
            .with(BoxBounds::new(
                dvector![config.lower, config.lower],
                dvector![config.upper, config.upper],
            ));
        let mid = 0.5 * (config.lower + config.upper);
        Ok(Self {
            position: dvector![mid, config.lower],
            target: dvector![mid, config.upper],
            config,
            system,
            constraints,
            steps: 0,
        })
    }

    pub fn config(&self) -> &Static2dConfig {
        &self.config
    }

    /// Places robot and target explicitly.
    pub fn set_state(&mut self, position: Vector, target: Vector) {
        self.position = position;
        self.target = target;
        self.steps = 0;
    }

    pub fn position(&self) -> &Vector {
        &self.position
    }

    fn free(&self, p: &Vector) -> bool {
        let k = self.constraints.eval_inequality(p).expect("2D point");
        max_entry(&k) < -self.config.spawn_margin
    }
}

impl Environment for Static2d {
    fn name(&self) -> &'static str {
        "static2d"
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = stream(seed, GEOMETRY_STREAM);
        let c = &self.config;
        let (lo, hi) = (c.lower, c.upper);
        let start = sample_point(&mut rng, lo, hi, 2, 0.0, |p| self.free(p));
        let target = sample_point(&mut rng, lo, hi, 2, 0.0, |p| {
            self.free(p) && (p - &start).norm() > c.min_target_distance
        });
        self.set_state(start, target);
        self.observation()
    }

    fn step(&mut self, u_s: &Vector) -> Result<Transition> {
        check_control(u_s, 2)?;
        let (u, _) = clip_to_bounds(u_s, self.system.control_bounds());
        self.position += u * self.config.dt;
        self.steps += 1;
        let k = self.constraint_values();
        let dist = (&self.position - &self.target).norm();
        let reached = dist < TARGET_TOLERANCE;
        let truncated = !reached && self.steps >= self.config.horizon;
        Ok(Transition {
            observation: self.observation(),
            reward: -dist,
            done: reached || truncated,
            info: StepInfo {
                max_violation: max_entry(&k),
                constraint_values: k,
                reached,
                truncated,
            },
        })
    }

    fn observation(&self) -> Observation {
        let [cx, cy] = self.config.obstacle_center;
        Observation {
            position: self.position.clone(),
            velocity: None,
            target: self.target.clone(),
            obstacles: vec![dvector![cx, cy]],
            obstacle_velocities: vec![dvector![0.0, 0.0]],
        }
    }

    fn plant_state(&self) -> PlantState {
        PlantState::new(self.position.clone())
    }

    fn system(&self) -> &dyn ControlAffineSystem {
        &self.system
    }

    fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    fn variant(&self) -> Variant {
        Variant::FirstOrder
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
        self.constraints
            .eval_inequality(&self.position)
            .expect("2D point")
    }
}
