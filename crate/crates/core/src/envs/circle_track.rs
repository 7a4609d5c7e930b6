use std::f64::consts::FRAC_PI_2;

use nalgebra::dvector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_control, max_entry, stream, Environment, Observation, StepInfo, Transition,
    GEOMETRY_STREAM, TARGET_TOLERANCE,
};
use crate::controller::PlantState;
use crate::error::{Error, Result};
use crate::manifold::{
    clip_to_bounds, ConstraintSet, ControlAffineSystem, DiskKeepOut, SingleIntegrator,
    SphereEquality, Variant,
};
use crate::numgeo::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircleTrackConfig {
    pub track_radius: f64,
    /// The keep-out disk sits on the track at the top.
    pub keep_out_radius: f64,
    pub v_max: f64,
    pub dt: f64,
    pub horizon: usize,
    pub spawn_margin: f64,
}

impl Default for CircleTrackConfig {
    fn default() -> Self {
        Self {
            track_radius: 1.0,
            keep_out_radius: 0.3,
            v_max: 1.0,
            dt: 0.01,
            horizon: 1000,
            spawn_margin: 0.05,
        }
    }
}

impl CircleTrackConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Parameter(format!("circle_track: {m}")));
        if !(self.track_radius > 0.0 && self.keep_out_radius > 0.0) {
            return err("radii must be > 0");
        }
        if !(self.keep_out_radius + self.spawn_margin < self.track_radius) {
            return err("keep-out disk must be smaller than the track");
        }
        if !(self.v_max > 0.0 && self.dt > 0.0) || self.horizon == 0 {
            return err("v_max, dt and horizon must be > 0");
        }
        Ok(())
    }

    fn keep_out_center(&self) -> Vector {
        dvector![0.0, self.track_radius]
    }
}

/// Velocity-controlled point that must stay on a circle (`l = |s|^2 - r^2`)
/// while avoiding a disk placed on the circle. The target is the bottom of
/// the circle; episodes run for the full horizon.
pub struct CircleTrack {
    config: CircleTrackConfig,
    system: SingleIntegrator,
    constraints: ConstraintSet,
    position: Vector,
    steps: usize,
}

impl CircleTrack {
    pub fn new(config: CircleTrackConfig) -> Result<Self> {
        config.validate()?;
        let constraints = ConstraintSet::new()
            .with(DiskKeepOut::new(
                config.keep_out_center(),
                config.keep_out_radius,
            ))
            .with(SphereEquality {
                center: dvector![0.0, 0.0],
                radius: config.track_radius,
            });
        Ok(Self {
            system: SingleIntegrator::new(2, config.v_max),
            constraints,
            position: dvector![0.0, -config.track_radius],
            steps: 0,
            config,
        })
    }

    pub fn set_position(&mut self, p: Vector) {
        self.position = p;
        self.steps = 0;
    }

    /// Equality residual `l(s)`.
    pub fn equality_residual(&self) -> f64 {
        self.constraints
            .eval_equality(&self.position)
            .expect("2D point")[0]
    }

    fn target(&self) -> Vector {
        dvector![0.0, -self.config.track_radius]
    }
}

impl Environment for CircleTrack {
    fn name(&self) -> &'static str {
        "circle_track"
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = stream(seed, GEOMETRY_STREAM);
        let c = &self.config;
        // smallest angular offset from the top that clears the disk
        let chord = (c.keep_out_radius + c.spawn_margin) / c.track_radius;
        let gap = 2.0 * (0.5 * chord).asin();
        let offset = rng.random_range(gap..(2.0 * std::f64::consts::PI - gap));
        let theta = FRAC_PI_2 + offset;
        self.set_position(dvector![theta.cos(), theta.sin()] * c.track_radius);
        self.observation()
    }

    fn step(&mut self, u_s: &Vector) -> Result<Transition> {
        check_control(u_s, 2)?;
        let (u, _) = clip_to_bounds(u_s, self.system.control_bounds());
        self.position += u * self.config.dt;
        self.steps += 1;
        let k = self.constraint_values();
        let dist = (&self.position - self.target()).norm();
        let truncated = self.steps >= self.config.horizon;
        Ok(Transition {
            observation: self.observation(),
            reward: -dist,
            done: truncated,
            info: StepInfo {
                max_violation: max_entry(&k),
                constraint_values: k,
                reached: dist < TARGET_TOLERANCE,
                truncated,
            },
        })
    }

    fn observation(&self) -> Observation {
        Observation {
            position: self.position.clone(),
            velocity: None,
            target: self.target(),
            obstacles: vec![self.config.keep_out_center()],
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
        Variant::Equality
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
