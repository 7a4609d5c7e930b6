//! Seedable point-robot simulations used to exercise the controller.

pub mod circle_track;
pub mod crossing;
pub mod double_integrator;
pub mod dynamic2d;
pub mod observer;
pub mod policy;
pub mod rollout;
pub mod static2d;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::PlantState;
use crate::error::{Error, Result};
use crate::manifold::{ConstraintSet, ControlAffineSystem, Variant};
use crate::numgeo::Vector;

pub use circle_track::{CircleTrack, CircleTrackConfig};
pub use crossing::{Crossing, CrossingConfig};
pub use double_integrator::{DoubleIntegratorEnv, DoubleIntegratorConfig};
pub use dynamic2d::{Dynamic2d, Dynamic2dConfig, ObstacleMotion};
pub use observer::{observe_velocity, ObserverMode, VelocityEstimate, VelocityObserver};
pub use policy::{attractor_policy, Attractor, FnPolicy, Policy, ScriptedConstant, UniformRandom};
pub use rollout::{run_episode, EpisodeResult, StepRecord};
pub use static2d::{Static2d, Static2dConfig};

/// A step counts as a violation when some inequality exceeds this value.
pub const VIOLATION_THRESHOLD: f64 = 1e-3;

/// Distance to the target below which an episode ends successfully.
pub const TARGET_TOLERANCE: f64 = 0.05;

/// Success: the target was reached and no step violated a constraint.
pub fn episode_success(reached: bool, violation_steps: usize) -> bool {
    reached && violation_steps == 0
}

/// What a policy sees.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub position: Vector,
    pub velocity: Option<Vector>,
    pub target: Vector,
    pub obstacles: Vec<Vector>,
    /// Observed (not necessarily true) obstacle velocities.
    pub obstacle_velocities: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// True inequality values after the step.
    pub constraint_values: Vector,
    /// `max_i k_i`, `-inf` without inequalities.
    pub max_violation: f64,
    pub reached: bool,
    pub truncated: bool,
}

impl StepInfo {
    pub fn violated(&self) -> bool {
        self.max_violation > VIOLATION_THRESHOLD
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

pub trait Environment: Send {
    fn name(&self) -> &'static str;

    /// Deterministic initial state for `seed`.
    fn reset(&mut self, seed: u64) -> Observation;

    /// Applies the plant control `u_s` for one period.
    fn step(&mut self, u_s: &Vector) -> Result<Transition>;

    fn observation(&self) -> Observation;

    /// State handed to the controller, including observed velocities.
    fn plant_state(&self) -> PlantState;

    fn system(&self) -> &dyn ControlAffineSystem;

    fn constraints(&self) -> &ConstraintSet;

    fn variant(&self) -> Variant;

    fn dt(&self) -> f64;

    fn horizon(&self) -> usize;

    /// Plant state for logging (`s`, followed by `s_dot` for second-order
    /// plants).
    fn state_vector(&self) -> Vector;

    /// True inequality values at the current state.
    fn constraint_values(&self) -> Vector;
}

pub(crate) fn max_entry(v: &Vector) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn check_control(u: &Vector, dim: usize) -> Result<()> {
    if u.len() != dim {
        return Err(Error::DimensionMismatch {
            what: "plant control",
            expected: dim,
            got: u.len(),
        });
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::EnvFault("non-finite control".into()));
    }
    Ok(())
}

/// Independent random streams derived from one episode seed.
pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub(crate) const GEOMETRY_STREAM: u64 = 0;
pub(crate) const MOTION_STREAM: u64 = 1;
pub(crate) const NOISE_STREAM: u64 = 2;

pub(crate) fn uniform_point(rng: &mut impl Rng, lo: f64, hi: f64, dim: usize) -> Vector {
    Vector::from_fn(dim, |_, _| rng.random_range(lo..hi))
}

/// Rejection-samples a point inside `[lo + margin, hi - margin]^dim` that
/// satisfies `accept`.
pub(crate) fn sample_point(
    rng: &mut impl Rng,
    lo: f64,
    hi: f64,
    dim: usize,
    margin: f64,
    accept: impl Fn(&Vector) -> bool,
) -> Vector {
    assert!(hi - lo > 2.0 * margin, "sampling region is empty");
    for _ in 0..MAX_REJECTIONS {
        let p = uniform_point(rng, lo + margin, hi - margin, dim);
        if accept(&p) {
            return p;
        }
    }
    panic!("no admissible point after {MAX_REJECTIONS} samples; check the environment geometry");
}

const MAX_REJECTIONS: usize = 1_000_000;
