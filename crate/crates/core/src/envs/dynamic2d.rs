use std::f64::consts::PI;

use nalgebra::dvector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::observer::{ObserverMode, VelocityObserver};
use super::{
    check_control, max_entry, sample_point, stream, Environment, Observation, StepInfo,
    Transition, GEOMETRY_STREAM, MOTION_STREAM, NOISE_STREAM, TARGET_TOLERANCE,
};
use crate::controller::PlantState;
use crate::error::{Error, Result};
use crate::manifold::{
    clip_to_bounds, ConstraintSet, ControlAffineSystem, MovingDiskKeepOut, SingleIntegrator,
    Variant,
};
use crate::numgeo::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleMotion {
    /// Circle of fixed radius around the spawn point.
    Circle,
    /// Constant speed, randomly drifting heading, reflected at the walls.
    RandomWalk,
}

impl std::str::FromStr for ObstacleMotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" | "fixed" => Ok(ObstacleMotion::Circle),
            "random_walk" | "random" => Ok(ObstacleMotion::RandomWalk),
            other => Err(Error::Parameter(format!("unknown obstacle motion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dynamic2dConfig {
    pub lower: f64,
    pub upper: f64,
    pub obstacles: usize,
    pub obstacle_radius: f64,
    /// Obstacle speed as a fraction of `v_max`.
    pub speed_scale: f64,
    pub motion: ObstacleMotion,
    pub circle_radius: f64,
    /// Heading diffusion of the random walk, rad / sqrt(s).
    pub heading_diffusion: f64,
    pub observer: ObserverMode,
    pub noise_std: f64,
    pub v_max: f64,
    pub dt: f64,
    pub horizon: usize,
    pub spawn_margin: f64,
    pub min_target_distance: f64,
}

impl Default for Dynamic2dConfig {
    fn default() -> Self {
        Self {
            lower: 0.0,
            upper: 1.0,
            obstacles: 2,
            obstacle_radius: 0.15,
            speed_scale: 0.5,
            motion: ObstacleMotion::Circle,
            circle_radius: 0.1,
            heading_diffusion: 2.0,
            observer: ObserverMode::Exact,
            noise_std: VelocityObserver::DEFAULT_NOISE_STD,
            v_max: 1.0,
            dt: 0.01,
            horizon: 1000,
            spawn_margin: 0.05,
            min_target_distance: 0.2,
        }
    }
}

impl Dynamic2dConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Parameter(format!("dynamic2d: {m}")));
        if !(self.upper - self.lower > 2.0 * self.spawn_margin) {
            return err("workspace must be wider than twice the spawn margin");
        }
        if self.obstacles == 0 {
            return err("need at least one obstacle");
        }
        if !(self.obstacle_radius > 0.0 && self.circle_radius > 0.0) {
            return err("radii must be > 0");
        }
        if !(self.speed_scale >= 0.0 && self.heading_diffusion >= 0.0 && self.noise_std >= 0.0) {
            return err("speed_scale, heading_diffusion and noise_std must be >= 0");
        }
        if !(self.v_max > 0.0 && self.dt > 0.0) || self.horizon == 0 {
            return err("v_max, dt and horizon must be > 0");
        }
        Ok(())
    }

    fn speed(&self) -> f64 {
        self.speed_scale * self.v_max
    }
}

#[derive(Debug, Clone)]
struct Obstacle {
    position: Vector,
    velocity: Vector,
    center: Vector,
    phase: f64,
    omega: f64,
    heading: f64,
}

/// Velocity-controlled point among moving disk obstacles. The obstacle
/// positions are the uncontrollable part of the state.
pub struct Dynamic2d {
    config: Dynamic2dConfig,
    system: SingleIntegrator,
    constraints: ConstraintSet,
    position: Vector,
    target: Vector,
    obstacles: Vec<Obstacle>,
    observers: Vec<VelocityObserver>,
    observed: Vec<Vector>,
    motion_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    steps: usize,
}

impl Dynamic2d {
    pub fn new(config: Dynamic2dConfig) -> Result<Self> {
        config.validate()?;
        let n = config.obstacles;
        let observers = (0..n)
            .map(|_| VelocityObserver::new(config.observer, config.noise_std, config.dt))
            .collect();
        let mut env = Self {
            system: SingleIntegrator::new(2, config.v_max),
            constraints: ConstraintSet::new().with(MovingDiskKeepOut::new(
                2,
                n,
                config.obstacle_radius,
            )),
            position: Vector::zeros(2),
            target: Vector::zeros(2),
            obstacles: Vec::new(),
            observers,
            observed: vec![Vector::zeros(2); n],
            motion_rng: stream(0, MOTION_STREAM),
            noise_rng: stream(0, NOISE_STREAM),
            steps: 0,
            config,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &Dynamic2dConfig {
        &self.config
    }

    fn stacked_positions(&self) -> Vector {
        let mut z = Vector::zeros(2 * self.obstacles.len());
        for (i, o) in self.obstacles.iter().enumerate() {
            z.rows_mut(2 * i, 2).copy_from(&o.position);
        }
        z
    }

    fn stack(vs: &[Vector]) -> Vector {
        let mut z = Vector::zeros(2 * vs.len());
        for (i, v) in vs.iter().enumerate() {
            z.rows_mut(2 * i, 2).copy_from(v);
        }
        z
    }

    fn spawn_obstacle(&self, rng: &mut ChaCha8Rng) -> Obstacle {
        let c = &self.config;
        let speed = c.speed();
        match c.motion {
            ObstacleMotion::Circle => {
                let center = sample_point(rng, c.lower, c.upper, 2, 0.0, |_| true);
                let phase = rng.random_range(0.0..2.0 * PI);
                let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let omega = dir * speed / c.circle_radius;
                let mut o = Obstacle {
                    position: center.clone(),
                    velocity: Vector::zeros(2),
                    center,
                    phase,
                    omega,
                    heading: 0.0,
                };
                self.place_on_circle(&mut o);
                o
            }
            ObstacleMotion::RandomWalk => {
                let position = sample_point(rng, c.lower, c.upper, 2, 0.0, |_| true);
                let heading = rng.random_range(0.0..2.0 * PI);
                Obstacle {
                    center: position.clone(),
                    velocity: dvector![heading.cos(), heading.sin()] * speed,
                    position,
                    phase: 0.0,
                    omega: 0.0,
                    heading,
                }
            }
        }
    }

    fn place_on_circle(&self, o: &mut Obstacle) {
        let r = self.config.circle_radius;
        let (s, c) = o.phase.sin_cos();
        o.position = &o.center + dvector![c, s] * r;
        o.velocity = dvector![-s, c] * (r * o.omega);
    }

    fn advance_obstacles(&mut self) {
        let dt = self.config.dt;
        let speed = self.config.speed();
        let sigma = self.config.heading_diffusion * dt.sqrt();
        let (lo, hi) = (self.config.lower, self.config.upper);
        for i in 0..self.obstacles.len() {
            match self.config.motion {
                ObstacleMotion::Circle => {
                    let mut o = self.obstacles[i].clone();
                    o.phase += o.omega * dt;
                    self.place_on_circle(&mut o);
                    self.obstacles[i] = o;
                }
                ObstacleMotion::RandomWalk => {
                    let n: f64 = self.motion_rng.sample(StandardNormal);
                    let o = &mut self.obstacles[i];
                    o.heading += sigma * n;
                    let mut v = dvector![o.heading.cos(), o.heading.sin()] * speed;
                    let mut p = &o.position + &v * dt;
                    for a in 0..2 {
                        if p[a] < lo {
                            p[a] = 2.0 * lo - p[a];
                            v[a] = -v[a];
                        } else if p[a] > hi {
                            p[a] = 2.0 * hi - p[a];
                            v[a] = -v[a];
                        }
                    }
                    o.heading = v[1].atan2(v[0]);
                    o.position = p;
                    o.velocity = v;
                }
            }
        }
    }

    fn observe_obstacles(&mut self) {
        for (i, o) in self.obstacles.iter().enumerate() {
            self.observed[i] =
                self.observers[i].observe(&o.position, &o.velocity, &mut self.noise_rng).value;
        }
    }

    fn inequality_at(&self, q: &Vector) -> Vector {
        let mut x = Vector::zeros(2 + 2 * self.obstacles.len());
        x.rows_mut(0, 2).copy_from(q);
        x.rows_mut(2, 2 * self.obstacles.len())
            .copy_from(&self.stacked_positions());
        self.constraints.eval_inequality(&x).expect("stacked state")
    }

    pub fn obstacle_positions(&self) -> Vec<Vector> {
        self.obstacles.iter().map(|o| o.position.clone()).collect()
    }
}

impl Environment for Dynamic2d {
    fn name(&self) -> &'static str {
        "dynamic2d"
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = stream(seed, GEOMETRY_STREAM);
        self.motion_rng = stream(seed, MOTION_STREAM);
        self.noise_rng = stream(seed, NOISE_STREAM);
        self.obstacles = (0..self.config.obstacles)
            .map(|_| self.spawn_obstacle(&mut rng))
            .collect();
        let c = self.config.clone();
        // clear of every obstacle now, and outside the part of a circle
        // obstacle's centre region that stays covered for the whole episode
        let covered = match c.motion {
            ObstacleMotion::Circle => (c.obstacle_radius - c.circle_radius).max(0.0),
            ObstacleMotion::RandomWalk => 0.0,
        };
        let clear = |p: &Vector| {
            self.obstacles.iter().all(|o| {
                (p - &o.position).norm() > c.obstacle_radius + c.spawn_margin
                    && (p - &o.center).norm() > covered + c.spawn_margin
            })
        };
        let start = sample_point(&mut rng, c.lower, c.upper, 2, c.spawn_margin, clear);
        let target = sample_point(&mut rng, c.lower, c.upper, 2, c.spawn_margin, |p| {
            clear(p) && (p - &start).norm() > c.min_target_distance
        });
        self.position = start;
        self.target = target;
        self.steps = 0;
        for o in &mut self.observers {
            o.reset();
        }
        self.observe_obstacles();
        self.observation()
    }

    fn step(&mut self, u_s: &Vector) -> Result<Transition> {
        check_control(u_s, 2)?;
        let (u, _) = clip_to_bounds(u_s, self.system.control_bounds());
        self.position += u * self.config.dt;
        self.advance_obstacles();
        self.observe_obstacles();
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
        Observation {
            position: self.position.clone(),
            velocity: None,
            target: self.target.clone(),
            obstacles: self.obstacle_positions(),
            obstacle_velocities: self.observed.clone(),
        }
    }

    fn plant_state(&self) -> PlantState {
        PlantState {
            s: self.position.clone(),
            s_dot: None,
            z: Some(self.stacked_positions()),
            z_dot: Some(Self::stack(&self.observed)),
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
        self.inequality_at(&self.position)
    }
}
