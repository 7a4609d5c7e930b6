use nalgebra::dvector;
use serde::{Deserialize, Serialize};

use super::{
    check_control, max_entry, sample_point, stream, Environment, Observation, StepInfo,
    Transition, GEOMETRY_STREAM, TARGET_TOLERANCE,
};
use crate::controller::PlantState;
use crate::error::{Error, Result};
use crate::manifold::{
    clip_to_bounds, inequality_values, BoxBounds, ConstraintSet, ControlAffineSystem,
    DiskKeepOut, DoubleIntegrator, Variant,
};
use crate::numgeo::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleIntegratorConfig {
    pub lower: f64,
    pub upper: f64,
    pub obstacle_center: [f64; 2],
    pub obstacle_radius: f64,
    /// Per-axis acceleration limit.
    pub a_max: f64,
    pub zeta_gain: f64,
    pub dt: f64,
    pub horizon: usize,
    pub spawn_margin: f64,
    pub min_target_distance: f64,
}

impl Default for DoubleIntegratorConfig {
    fn default() -> Self {
        Self {
            lower: 0.0,
            upper: 1.0,
            obstacle_center: [0.5, 0.5],
            obstacle_radius: 0.15,
            a_max: 10.0,
            zeta_gain: Variant::DEFAULT_ZETA_GAIN,
            dt: 0.01,
            horizon: 1000,
            spawn_margin: 0.05,
            min_target_distance: 0.2,
        }
    }
}

impl DoubleIntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Parameter(format!("double_integrator: {m}")));
        if !(self.upper - self.lower > 2.0 * self.spawn_margin) {
            return err("workspace must be wider than twice the spawn margin");
        }
        if !(self.obstacle_radius > 0.0 && self.a_max > 0.0 && self.dt > 0.0) {
            return err("obstacle_radius, a_max and dt must be > 0");
        }
        if !(self.zeta_gain > 0.0) {
            return err("zeta_gain must be > 0");
        }
        if self.horizon == 0 {
            return err("horizon must be > 0");
        }
        Ok(())
    }
}

/// Acceleration-controlled point with the static obstacle and wall
/// constraints, handled through the velocity-lifted constraint rows.
pub struct DoubleIntegratorEnv {
    config: DoubleIntegratorConfig,
    system: DoubleIntegrator,
    constraints: ConstraintSet,
    position: Vector,
    velocity: Vector,
    target: Vector,
    steps: usize,
}

impl DoubleIntegratorEnv {
    pub fn new(config: DoubleIntegratorConfig) -> Result<Self> {
        config.validate()?;
        let [cx, cy] = config.obstacle_center;
        let constraints = ConstraintSet::new()
            .with(DiskKeepOut::new(dvector![cx, cy], config.obstacle_radius))
            .with(BoxBounds::new(
                dvector![config.lower, config.lower],
                dvector![config.upper, config.upper],
            ));
        let mut env = Self {
            system: DoubleIntegrator::new(2, config.a_max),
            constraints,
            position: Vector::zeros(2),
            velocity: Vector::zeros(2),
            target: Vector::zeros(2),
            steps: 0,
            config,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &DoubleIntegratorConfig {
        &self.config
    }

    pub fn set_state(&mut self, position: Vector, velocity: Vector, target: Vector) {
        self.position = position;
        self.velocity = velocity;
        self.target = target;
        self.steps = 0;
    }

    /// `k* = zeta k + J_k s_dot` at the current state.
    pub fn lifted_constraint_values(&self) -> Vector {
        inequality_values(
            self.variant(),
            &self.constraints,
            &self.position,
            None,
            Some(&self.velocity),
        )
        .expect("2D state")
    }

    fn free(&self, p: &Vector) -> bool {
        let k = self.constraints.eval_inequality(p).expect("2D point");
        max_entry(&k) < -self.config.spawn_margin
    }
}

impl Environment for DoubleIntegratorEnv {
    fn name(&self) -> &'static str {
        "double_integrator"
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = stream(seed, GEOMETRY_STREAM);
        let (lo, hi) = (self.config.lower, self.config.upper);
        let start = sample_point(&mut rng, lo, hi, 2, 0.0, |p| self.free(p));
        let target = sample_point(&mut rng, lo, hi, 2, 0.0, |p| {
            self.free(p) && (p - &start).norm() > self.config.min_target_distance
        });
        self.set_state(start, Vector::zeros(2), target);
        self.observation()
    }

    fn step(&mut self, u_s: &Vector) -> Result<Transition> {
        check_control(u_s, 2)?;
        let (u, _) = clip_to_bounds(u_s, self.system.control_bounds());
        let dt = self.config.dt;
        self.velocity += u * dt;
        self.position += &self.velocity * dt;
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
            velocity: Some(self.velocity.clone()),
            target: self.target.clone(),
            obstacles: vec![dvector![cx, cy]],
            obstacle_velocities: vec![dvector![0.0, 0.0]],
        }
    }

    fn plant_state(&self) -> PlantState {
        PlantState {
            s: self.position.clone(),
            s_dot: Some(self.velocity.clone()),
            z: None,
            z_dot: None,
        }
    }

    fn system(&self) -> &dyn ControlAffineSystem {
        &self.system
    }

    fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    fn variant(&self) -> Variant {
        Variant::SecondOrder {
            zeta_gain: self.config.zeta_gain,
        }
    }

    fn dt(&self) -> f64 {
        self.config.dt
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn state_vector(&self) -> Vector {
        dvector![
            self.position[0],
            self.position[1],
            self.velocity[0],
            self.velocity[1]
        ]
    }

    fn constraint_values(&self) -> Vector {
        self.constraints
            .eval_inequality(&self.position)
            .expect("2D point")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn semi_implicit_euler() {
        let mut env = DoubleIntegratorEnv::new(DoubleIntegratorConfig::default()).unwrap();
        env.set_state(dvector![0.1, 0.1], dvector![0.0, 0.0], dvector![0.9, 0.9]);
        env.step(&dvector![1.0, 0.0]).unwrap();
        assert_relative_eq!(env.velocity[0], 0.01, epsilon = 1e-15);
        assert_relative_eq!(env.position[0], 0.1 + 1e-4, epsilon = 1e-15);
    }

    #[test]
    fn reset_starts_at_rest_inside() {
        let mut env = DoubleIntegratorEnv::new(DoubleIntegratorConfig::default()).unwrap();
        for seed in 0..100 {
            env.reset(seed);
            assert_eq!(env.velocity, dvector![0.0, 0.0]);
            assert!(max_entry(&env.lifted_constraint_values()) < 0.0);
        }
    }
}
