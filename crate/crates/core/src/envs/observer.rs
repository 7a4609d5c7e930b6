use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::numgeo::Vector;

/// How the velocity of uncontrollable points is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObserverMode {
    /// True velocity.
    Exact,
    /// Finite difference of noisy positions.
    Fd,
    /// Always zero.
    None,
}

impl ObserverMode {
    pub const ALL: [ObserverMode; 3] = [ObserverMode::Exact, ObserverMode::Fd, ObserverMode::None];

    pub fn label(&self) -> &'static str {
        match self {
            ObserverMode::Exact => "exact",
            ObserverMode::Fd => "fd",
            ObserverMode::None => "none",
        }
    }
}

impl std::str::FromStr for ObserverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(ObserverMode::Exact),
            "fd" => Ok(ObserverMode::Fd),
            "none" => Ok(ObserverMode::None),
            other => Err(Error::Parameter(format!("unknown observer mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityEstimate {
    pub value: Vector,
    /// Set when the finite difference lacked history and zero was returned.
    pub warm_up: bool,
}

/// Velocity estimate from the last two entries of `position_history`
/// (oldest first) or from `true_velocity`, depending on `mode`.
pub fn observe_velocity(
    mode: ObserverMode,
    position_history: &[Vector],
    true_velocity: &Vector,
    dt: f64,
) -> VelocityEstimate {
    let zero = || Vector::zeros(true_velocity.len());
    match mode {
        ObserverMode::Exact => VelocityEstimate {
            value: true_velocity.clone(),
            warm_up: false,
        },
        ObserverMode::None => VelocityEstimate {
            value: zero(),
            warm_up: false,
        },
        ObserverMode::Fd => match position_history {
            [.., prev, last] => VelocityEstimate {
                value: (last - prev) / dt,
                warm_up: false,
            },
            _ => VelocityEstimate {
                value: zero(),
                warm_up: true,
            },
        },
    }
}

/// Stateful observer for one point: adds Gaussian position noise and keeps
/// the last two noisy positions.
#[derive(Debug, Clone)]
pub struct VelocityObserver {
    pub mode: ObserverMode,
    pub noise_std: f64,
    dt: f64,
    history: Vec<Vector>,
}

impl VelocityObserver {
    pub const DEFAULT_NOISE_STD: f64 = 0.03;

    pub fn new(mode: ObserverMode, noise_std: f64, dt: f64) -> Self {
        Self {
            mode,
            noise_std,
            dt,
            history: Vec::with_capacity(2),
        }
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    /// Records the current true position and returns the estimate.
    pub fn observe(
        &mut self,
        position: &Vector,
        true_velocity: &Vector,
        rng: &mut ChaCha8Rng,
    ) -> VelocityEstimate {
        if self.mode == ObserverMode::Fd {
            let noisy = if self.noise_std > 0.0 {
                let normal = Normal::new(0.0, self.noise_std).expect("noise std is finite");
                position.map(|x| x + normal.sample(rng))
            } else {
                position.clone()
            };
            if self.history.len() == 2 {
                self.history.remove(0);
            }
            self.history.push(noisy);
        }
        observe_velocity(self.mode, &self.history, true_velocity, self.dt)
    }
}
