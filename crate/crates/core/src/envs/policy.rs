use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Observation;
use crate::numgeo::{Matrix, Vector};

/// Supplies agent actions in the unit box.
pub trait Policy: Send {
    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, observation: &Observation, action_dim: usize) -> Vector;
}

/// `clip(K_p (p_t - p), [-1, 1])`.
pub fn attractor_policy(observation: &Observation, k_p: &Matrix) -> Vector {
    let offset = &observation.target - &observation.position;
    (k_p * offset).map(|x| x.clamp(-1.0, 1.0))
}

/// Linear attractor towards the target.
#[derive(Debug, Clone)]
pub struct Attractor {
    pub k_p: Matrix,
}

impl Attractor {
    pub fn new(k_p: Matrix) -> Self {
        Self { k_p }
    }

    pub fn isotropic(dim: usize, gain: f64) -> Self {
        Self::new(Matrix::identity(dim, dim) * gain)
    }
}

impl Policy for Attractor {
    fn act(&mut self, observation: &Observation, action_dim: usize) -> Vector {
        let a = attractor_policy(observation, &self.k_p);
        let mut out = Vector::zeros(action_dim);
        let n = a.len().min(action_dim);
        out.rows_mut(0, n).copy_from(&a.rows(0, n));
        out
    }
}

/// Independent uniform samples from the unit box at every step.
#[derive(Debug, Clone)]
pub struct UniformRandom {
    rng: ChaCha8Rng,
}

impl UniformRandom {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for UniformRandom {
    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.rng.set_stream(7);
    }

    fn act(&mut self, _observation: &Observation, action_dim: usize) -> Vector {
        Vector::from_fn(action_dim, |_, _| self.rng.random_range(-1.0..=1.0))
    }
}

/// The same action every step, padded or truncated to the action dimension.
#[derive(Debug, Clone)]
pub struct ScriptedConstant {
    pub action: Vec<f64>,
}

impl Policy for ScriptedConstant {
    fn act(&mut self, _observation: &Observation, action_dim: usize) -> Vector {
        Vector::from_fn(action_dim, |i, _| {
            self.action.get(i).copied().unwrap_or(0.0).clamp(-1.0, 1.0)
        })
    }
}

/// Adapter for an external action supplier.
pub struct FnPolicy<F>(pub F);

impl<F> Policy for FnPolicy<F>
where
    F: FnMut(&Observation, usize) -> Vector + Send,
{
    fn act(&mut self, observation: &Observation, action_dim: usize) -> Vector {
        (self.0)(observation, action_dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn obs(p: Vector, t: Vector) -> Observation {
        Observation {
            position: p,
            velocity: None,
            target: t,
            obstacles: vec![],
            obstacle_velocities: vec![],
        }
    }

    #[test]
    fn attractor_examples() {
        let eye = Matrix::identity(2, 2);
        let at = obs(dvector![0.3, 0.3], dvector![0.3, 0.3]);
        assert_eq!(attractor_policy(&at, &eye), dvector![0.0, 0.0]);
        let far = obs(dvector![0.0, 0.0], dvector![2.0, 0.0]);
        assert_eq!(attractor_policy(&far, &eye), dvector![1.0, 0.0]);
        let half = Matrix::identity(2, 2) * 0.5;
        let o = obs(dvector![0.0, 0.0], dvector![1.0, -1.0]);
        assert_eq!(attractor_policy(&o, &half), dvector![0.5, -0.5]);
    }

    #[test]
    fn uniform_random_is_seeded_and_bounded() {
        let o = obs(dvector![0.0, 0.0], dvector![0.0, 0.0]);
        let mut a = UniformRandom::new(0);
        let mut b = UniformRandom::new(0);
        a.reset(3);
        b.reset(3);
        for _ in 0..100 {
            let x = a.act(&o, 2);
            assert_eq!(x, b.act(&o, 2));
            assert!(x.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn scripted_pads() {
        let mut p = ScriptedConstant { action: vec![1.0] };
        let o = obs(dvector![0.0], dvector![0.0]);
        assert_eq!(p.act(&o, 2), dvector![1.0, 0.0]);
    }
}
