use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numgeo::Vector;

/// Shape of the class-K function `alpha` in the slack dynamics
/// `mu_dot = alpha(mu) * u_mu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlackFamily {
    /// `alpha(mu) = beta * mu`
    Linear,
    /// `alpha(mu) = exp(beta * mu) - 1`
    #[serde(alias = "exp")]
    Exponential,
}

impl SlackFamily {
    pub fn label(&self) -> &'static str {
        match self {
            SlackFamily::Linear => "linear",
            SlackFamily::Exponential => "exp",
        }
    }
}

impl std::str::FromStr for SlackFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "lin" => Ok(SlackFamily::Linear),
            "exp" | "exponential" => Ok(SlackFamily::Exponential),
            other => Err(Error::Parameter(format!("unknown slack family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackModel {
    pub family: SlackFamily,
    /// Stiffness, > 0.
    pub beta: f64,
    /// Smallest slack value assigned on reset, > 0.
    pub tol: f64,
    /// Slack values above the cap are clamped before evaluating `alpha`.
    pub mu_cap: Option<f64>,
}

impl SlackModel {
    pub const DEFAULT_TOL: f64 = 1e-6;

    pub fn new(family: SlackFamily, beta: f64, tol: f64) -> Result<Self> {
        let model = Self {
            family,
            beta,
            tol,
            mu_cap: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn linear(beta: f64) -> Result<Self> {
        Self::new(SlackFamily::Linear, beta, Self::DEFAULT_TOL)
    }

    pub fn exponential(beta: f64) -> Result<Self> {
        Self::new(SlackFamily::Exponential, beta, Self::DEFAULT_TOL)
    }

    pub fn with_cap(mut self, cap: f64) -> Result<Self> {
        self.mu_cap = Some(cap);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Parameter(format!("slack beta must be > 0, got {}", self.beta)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Parameter(format!("slack tol must be > 0, got {}", self.tol)));
        }
        if let Some(cap) = self.mu_cap {
            if !(cap > self.tol) {
                return Err(Error::Parameter(format!(
                    "slack cap {cap} must exceed the tolerance {}",
                    self.tol
                )));
            }
        }
        Ok(())
    }

    fn clamp(&self, mu: f64) -> f64 {
        self.mu_cap.map_or(mu, |cap| mu.min(cap))
    }

    /// `alpha(mu)` for one slack coordinate.
    pub fn alpha(&self, mu: f64) -> Result<f64> {
        if !(mu >= 0.0) {
            return Err(Error::SlackDomain(mu));
        }
        let mu = self.clamp(mu);
        Ok(match self.family {
            SlackFamily::Linear => self.beta * mu,
            SlackFamily::Exponential => (self.beta * mu).exp_m1(),
        })
    }

    /// `alpha'(mu)`.
    pub fn alpha_derivative(&self, mu: f64) -> f64 {
        let mu = self.clamp(mu.max(0.0));
        match self.family {
            SlackFamily::Linear => self.beta,
            SlackFamily::Exponential => self.beta * (self.beta * mu).exp(),
        }
    }

    /// Lipschitz constant of `alpha` on `[0, upper]`. `alpha` is convex or
    /// linear, so the derivative is largest at the right end.
    pub fn lipschitz_on(&self, upper: f64) -> f64 {
        self.alpha_derivative(upper)
    }
}

/// Elementwise `alpha(mu)`, i.e. the diagonal of `A(mu)`.
pub fn slack_alpha(model: &SlackModel, mu: &Vector) -> Result<Vector> {
    let mut out = Vector::zeros(mu.len());
    for (o, &m) in out.iter_mut().zip(mu.iter()) {
        *o = model.alpha(m)?;
    }
    Ok(out)
}

/// Slack values that put the augmented state on the manifold where possible:
/// `mu_i = max(-k_i, tol)`.
pub fn slack_reset(model: &SlackModel, k_value: &Vector) -> Vector {
    k_value.map(|k| (-k).max(model.tol))
}
