//! Experiment configuration, read from TOML.
//!
//! ```toml
//! episodes = 25
//! seed = 0
//!
//! [env]
//! id = "static2d"
//!
//! [slack]
//! family = "linear"
//! beta = 0.3
//!
//! [policy]
//! id = "attractor"
//! ```
//!
//! Every section is optional and falls back to the defaults below. Unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use atacom::controller::{AtacomController, ControllerConfig};
use atacom::envs::{
    Attractor, CircleTrack, CircleTrackConfig, DoubleIntegratorConfig, DoubleIntegratorEnv,
    Dynamic2d, Dynamic2dConfig, Environment, Policy, ScriptedConstant, Static2d,
    Static2dConfig, UniformRandom,
};
use atacom::manifold::{SlackFamily, SlackModel, Variant};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Static2d,
    Dynamic2d,
    DoubleIntegrator,
    CircleTrack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantId {
    /// Whatever the environment needs.
    Auto,
    FirstOrder,
    SecondOrder,
    Separable,
    Equality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyId {
    Attractor,
    UniformRandom,
    ScriptedConstant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub id: EnvId,
    /// Overrides the environment's own horizon and step when set.
    pub horizon: Option<usize>,
    pub dt: Option<f64>,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            id: EnvId::Static2d,
            horizon: None,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub variant: VariantId,
    pub lambda: f64,
    pub drift_clipping: bool,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            variant: VariantId::Auto,
            lambda: ControllerConfig::DEFAULT_LAMBDA,
            drift_clipping: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlackSection {
    pub family: SlackFamily,
    pub beta: f64,
    pub tol: f64,
}

impl Default for SlackSection {
    fn default() -> Self {
        Self {
            family: SlackFamily::Exponential,
            beta: 4.0,
            tol: SlackModel::DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub id: PolicyId,
    /// Attractor gain `K_p = gain * I`.
    pub gain: f64,
    /// Action of the scripted-constant policy.
    pub action: Vec<f64>,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            id: PolicyId::Attractor,
            gain: 10.0,
            action: vec![1.0, 0.0],
        }
    }
}

/// One swept config field and the values it takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted path into the config, e.g. `slack.beta`.
    pub field: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub episodes: usize,
    /// Episode `i` is reset with seed `seed + i`.
    pub seed: u64,
    /// Discount for the reported return.
    pub gamma: f64,
    pub output_dir: PathBuf,
    /// Write one CSV per episode on `run`.
    pub write_episodes: bool,
    pub env: EnvSection,
    pub controller: ControllerSection,
    pub slack: SlackSection,
    pub policy: PolicySection,
    pub static2d: Static2dConfig,
    /// Also holds the velocity observer mode and its noise.
    pub dynamic2d: Dynamic2dConfig,
    pub double_integrator: DoubleIntegratorConfig,
    pub circle_track: CircleTrackConfig,
    /// Axes for the `sweep` subcommand; ignored by `run`.
    pub sweep: Vec<SweepAxis>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            episodes: 25,
            seed: 0,
            gamma: 0.99,
            output_dir: PathBuf::from("runs"),
            write_episodes: true,
            env: EnvSection::default(),
            controller: ControllerSection::default(),
            slack: SlackSection::default(),
            policy: PolicySection::default(),
            static2d: Static2dConfig::default(),
            dynamic2d: Dynamic2dConfig::default(),
            double_integrator: DoubleIntegratorConfig::default(),
            circle_track: CircleTrackConfig::default(),
            sweep: Vec::new(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Validation(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        let cfg: Self = value.try_into().map_err(|e: toml::de::Error| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_value(&self) -> toml::Value {
        toml::Value::try_from(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(invalid("episodes: must be >= 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid(format!("gamma: must be in (0, 1], got {}", self.gamma)));
        }
        if self.env.horizon == Some(0) {
            return Err(invalid("env.horizon: must be >= 1"));
        }
        if let Some(dt) = self.env.dt {
            if !(dt > 0.0 && dt <= 1.0) {
                return Err(invalid(format!("env.dt: must be in (0, 1], got {dt}")));
            }
        }
        if !(self.controller.lambda > 0.0 && self.controller.lambda.is_finite()) {
            return Err(invalid(format!(
                "controller.lambda: must be > 0, got {}",
                self.controller.lambda
            )));
        }
        SlackModel::new(self.slack.family, self.slack.beta, self.slack.tol)
            .map_err(|e| invalid(format!("slack: {e}")))?;
        if !(self.policy.gain > 0.0 && self.policy.gain.is_finite()) {
            return Err(invalid("policy.gain: must be > 0"));
        }
        if self.policy.action.iter().any(|a| !(-1.0..=1.0).contains(a)) {
            return Err(invalid("policy.action: entries must lie in [-1, 1]"));
        }
        for axis in &self.sweep {
            if axis.values.is_empty() {
                return Err(invalid(format!("sweep axis `{}` has no values", axis.field)));
            }
        }
        // environment parameters, checked by constructing one
        let env = self.build_env()?;
        let expected = env.variant();
        let matches = match self.controller.variant {
            VariantId::Auto => true,
            VariantId::FirstOrder => expected == Variant::FirstOrder,
            VariantId::SecondOrder => matches!(expected, Variant::SecondOrder { .. }),
            VariantId::Separable => expected == Variant::Separable,
            VariantId::Equality => expected == Variant::Equality,
        };
        if !matches {
            return Err(invalid(format!(
                "controller.variant: {:?} does not fit env {:?}",
                self.controller.variant, self.env.id
            )));
        }
        Ok(())
    }

    pub fn slack_model(&self) -> Result<SlackModel> {
        Ok(SlackModel::new(self.slack.family, self.slack.beta, self.slack.tol)?)
    }

    pub fn build_env(&self) -> Result<Box<dyn Environment>> {
        let wrap = |e: atacom::Error| invalid(format!("{:?}: {e}", self.env.id));
        Ok(match self.env.id {
            EnvId::Static2d => {
                let mut c = self.static2d.clone();
                if let Some(h) = self.env.horizon {
                    c.horizon = h;
                }
                if let Some(dt) = self.env.dt {
                    c.dt = dt;
                }
                Box::new(Static2d::new(c).map_err(wrap)?)
            }
            EnvId::Dynamic2d => {
                let mut c = self.dynamic2d.clone();
                if let Some(h) = self.env.horizon {
                    c.horizon = h;
                }
                if let Some(dt) = self.env.dt {
                    c.dt = dt;
                }
                Box::new(Dynamic2d::new(c).map_err(wrap)?)
            }
            EnvId::DoubleIntegrator => {
                let mut c = self.double_integrator.clone();
                if let Some(h) = self.env.horizon {
                    c.horizon = h;
                }
                if let Some(dt) = self.env.dt {
                    c.dt = dt;
                }
                Box::new(DoubleIntegratorEnv::new(c).map_err(wrap)?)
            }
            EnvId::CircleTrack => {
                let mut c = self.circle_track.clone();
                if let Some(h) = self.env.horizon {
                    c.horizon = h;
                }
                if let Some(dt) = self.env.dt {
                    c.dt = dt;
                }
                Box::new(CircleTrack::new(c).map_err(wrap)?)
            }
        })
    }

    pub fn build_controller(&self, env: &dyn Environment) -> Result<AtacomController> {
        let config = ControllerConfig::default()
            .with_lambda(self.controller.lambda)
            .with_drift_clipping(self.controller.drift_clipping);
        Ok(AtacomController::new(env.variant(), self.slack_model()?, config)?)
    }

    pub fn build_policy(&self) -> Box<dyn Policy> {
        match self.policy.id {
            PolicyId::Attractor => Box::new(Attractor::isotropic(2, self.policy.gain)),
            // reseeded per episode by the rollout
            PolicyId::UniformRandom => Box::new(UniformRandom::new(self.seed)),
            PolicyId::ScriptedConstant => Box::new(ScriptedConstant {
                action: self.policy.action.clone(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use atacom::envs::ObserverMode;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.gamma, 0.99);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.env.id = EnvId::Dynamic2d;
        cfg.dynamic2d.observer = ObserverMode::Fd;
        cfg.slack.family = SlackFamily::Linear;
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let err = ExperimentConfig::from_toml_str("[slack]\nbeta = 1.0\ngamma = 2\n").unwrap_err();
        assert!(matches!(err, HarnessError::Validation(_)));
        assert!(err.to_string().contains("gamma"), "{err}");
        assert!(ExperimentConfig::from_toml_str("colour = 1").is_err());
    }

    #[test]
    fn out_of_range_values_name_the_field() {
        for (text, field) in [
            ("episodes = 0", "episodes"),
            ("gamma = 1.5", "gamma"),
            ("[controller]\nlambda = -1.0", "controller.lambda"),
            ("[slack]\nbeta = 0.0", "slack"),
            ("[policy]\naction = [2.0]", "policy.action"),
        ] {
            let err = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert!(err.to_string().contains(field), "{text}: {err}");
            assert_eq!(err.exit_code(), 1);
        }
    }

    #[test]
    fn variant_must_fit_the_environment() {
        let text = "[env]\nid = \"circle_track\"\n[controller]\nvariant = \"first_order\"\n";
        assert!(ExperimentConfig::from_toml_str(text).is_err());
        let text = "[env]\nid = \"circle_track\"\n[controller]\nvariant = \"equality\"\n";
        assert!(ExperimentConfig::from_toml_str(text).is_ok());
    }

    #[test]
    fn env_overrides_apply() {
        let cfg = ExperimentConfig::from_toml_str("[env]\nhorizon = 50\ndt = 0.02\n").unwrap();
        let env = cfg.build_env().unwrap();
        assert_eq!(env.horizon(), 50);
        assert_eq!(env.dt(), 0.02);
    }
}
