//! Safe controller: maps an agent action, given as coordinates in the tangent
//! frame, to a plant control that keeps the state on the constraint manifold.

use crate::error::{Error, Result};
use crate::manifold::{
    assemble, clip_to_bounds, inequality_values, slack_reset, AugmentedAssembly, AugmentedState,
    ConstraintSet, ControlAffineSystem, SlackModel, Variant,
};
use crate::numgeo::{axis_aligned_frame, orthonormality_error, Matrix, RankPolicy, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Contraction gain, > 0.
    pub lambda: f64,
    pub drift_clipping: bool,
    pub rank_policy: RankPolicy,
    /// Persistent frame the tangent basis is aligned to. `None` selects the
    /// axis-aligned frame of the right size.
    pub reference_frame: Option<Matrix>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            lambda: Self::DEFAULT_LAMBDA,
            drift_clipping: true,
            rank_policy: RankPolicy::default(),
            reference_frame: None,
        }
    }
}

impl ControllerConfig {
    pub const DEFAULT_LAMBDA: f64 = 10.0;

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_drift_clipping(mut self, on: bool) -> Self {
        self.drift_clipping = on;
        self
    }

    pub fn with_reference_frame(mut self, t: Matrix) -> Self {
        self.reference_frame = Some(t);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if let Some(t) = &self.reference_frame {
            if t.iter().any(|x| !x.is_finite()) || orthonormality_error(t) > 1e-9 {
                return Err(Error::Parameter(
                    "reference frame columns must be orthonormal".into(),
                ));
            }
        }
        Ok(())
    }

    /// Reference frame for an augmented control space of dimension `n` with
    /// `action_dim` free directions.
    pub fn frame(&self, n: usize, action_dim: usize) -> Result<Matrix> {
        match &self.reference_frame {
            Some(t) if t.shape() == (n, action_dim) => Ok(t.clone()),
            Some(t) => Err(Error::FrameMismatch {
                kernel: action_dim,
                frame: t.ncols(),
            }),
            None => Ok(axis_aligned_frame(n, action_dim)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafeAction {
    /// Plant control, clipped to the control bounds.
    pub u_s: Vector,
    /// Slack control.
    pub u_mu: Vector,
    /// Set when clipping changed `u_s`.
    pub saturated: bool,
}

/// `max(psi, 0)` elementwise.
pub fn drift_clip(psi: &Vector) -> Vector {
    psi.map(|x| x.max(0.0))
}

fn effective_drift(assembly: &AugmentedAssembly, config: &ControllerConfig) -> Vector {
    if config.drift_clipping {
        drift_clip(&assembly.psi)
    } else {
        assembly.psi.clone()
    }
}

/// `[u_s; u_mu] = -J_u^+ psi - lambda J_u^+ c + B_u u`.
pub fn safe_action(
    assembly: &AugmentedAssembly,
    agent_action: &Vector,
    config: &ControllerConfig,
) -> Result<SafeAction> {
    if agent_action.len() != assembly.action_dim() {
        return Err(Error::DimensionMismatch {
            what: "agent action",
            expected: assembly.action_dim(),
            got: agent_action.len(),
        });
    }
    if agent_action.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("agent action"));
    }
    if agent_action.iter().any(|x| x.abs() > 1.0 + 1e-12) {
        return Err(Error::Parameter("agent action outside the unit box".into()));
    }
    let pinv = assembly.pseudoinverse();
    let psi = effective_drift(assembly, config);
    let full = -(pinv * (psi + &assembly.c * config.lambda)) + &assembly.b_u * agent_action;
    let n_u = assembly.control_dim;
    let raw_u_s = full.rows(0, n_u).into_owned();
    let u_mu = full.rows(n_u, full.len() - n_u).into_owned();
    let (u_s, saturated) = clip_to_bounds(&raw_u_s, &assembly.control_bounds);
    Ok(SafeAction {
        u_s,
        u_mu,
        saturated,
    })
}

/// `|| psi_hat + lambda c + J_u [u_s; u_mu] ||`. Zero whenever the executed
/// control realises the commanded constraint rate exactly.
pub fn tangency_residual(
    assembly: &AugmentedAssembly,
    action: &SafeAction,
    config: &ControllerConfig,
) -> f64 {
    let mut full = Vector::zeros(assembly.j_u.ncols());
    let n_u = assembly.control_dim;
    full.rows_mut(0, n_u).copy_from(&action.u_s);
    full.rows_mut(n_u, action.u_mu.len()).copy_from(&action.u_mu);
    let psi = effective_drift(assembly, config);
    (psi + &assembly.c * config.lambda + &assembly.j_u * full).norm()
}

/// What the plant exposes to the controller at one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub s: Vector,
    pub s_dot: Option<Vector>,
    pub z: Option<Vector>,
    /// Estimated velocity of `z`.
    pub z_dot: Option<Vector>,
}

impl PlantState {
    pub fn new(s: Vector) -> Self {
        Self {
            s,
            s_dot: None,
            z: None,
            z_dot: None,
        }
    }
}

/// Result of one controller evaluation with the intermediate geometry.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub action: SafeAction,
    pub mu: Vector,
    pub assembly: AugmentedAssembly,
    pub tangency_residual: f64,
}

impl StepOutput {
    /// Largest inequality value `k_i` (or `k*_i`), `-inf` without inequalities.
    pub fn max_inequality(&self) -> f64 {
        let n = self.mu.len();
        self.assembly
            .constraint_values
            .rows(0, n)
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One full controller evaluation: slack reset, assembly, safe action.
#[allow(clippy::too_many_arguments)]
pub fn atacom_step(
    variant: Variant,
    system: &dyn ControlAffineSystem,
    constraints: &ConstraintSet,
    slack: &SlackModel,
    plant: &PlantState,
    agent_action: &Vector,
    config: &ControllerConfig,
) -> Result<StepOutput> {
    let k = inequality_values(
        variant,
        constraints,
        &plant.s,
        plant.z.as_ref(),
        plant.s_dot.as_ref(),
    )?;
    let mu = slack_reset(slack, &k);
    let state = AugmentedState {
        s: plant.s.clone(),
        z: plant.z.clone(),
        s_dot: plant.s_dot.clone(),
        mu: mu.clone(),
    };
    let n = system.control_dim() + mu.len();
    let rows = mu.len() + constraints.equality_dim();
    let action_dim = n.checked_sub(rows).filter(|d| *d > 0).ok_or(Error::EmptyKernel {
        rank: rows.min(n),
    })?;
    let frame = config.frame(n, action_dim)?;
    let assembly = assemble(
        variant,
        system,
        constraints,
        slack,
        &state,
        plant.z_dot.as_ref(),
        &frame,
        config.rank_policy,
    )?;
    let action = safe_action(&assembly, agent_action, config)?;
    let tangency_residual = tangency_residual(&assembly, &action, config);
    Ok(StepOutput {
        action,
        mu,
        assembly,
        tangency_residual,
    })
}

/// Bundles the fixed parts of the controller.
#[derive(Debug, Clone)]
pub struct AtacomController {
    pub variant: Variant,
    pub slack: SlackModel,
    pub config: ControllerConfig,
}

impl AtacomController {
    pub fn new(variant: Variant, slack: SlackModel, config: ControllerConfig) -> Result<Self> {
        slack.validate()?;
        config.validate()?;
        if let Variant::SecondOrder { zeta_gain } = variant {
            if !(zeta_gain > 0.0) {
                return Err(Error::Parameter(format!(
                    "zeta gain must be > 0, got {zeta_gain}"
                )));
            }
        }
        Ok(Self {
            variant,
            slack,
            config,
        })
    }

    /// Dimension of the agent action for the given problem.
    pub fn action_dim(&self, system: &dyn ControlAffineSystem, constraints: &ConstraintSet) -> usize {
        let n = system.control_dim() + constraints.inequality_dim();
        n.saturating_sub(constraints.inequality_dim() + constraints.equality_dim())
    }

    pub fn step(
        &self,
        system: &dyn ControlAffineSystem,
        constraints: &ConstraintSet,
        plant: &PlantState,
        agent_action: &Vector,
    ) -> Result<StepOutput> {
        atacom_step(
            self.variant,
            system,
            constraints,
            &self.slack,
            plant,
            agent_action,
            &self.config,
        )
    }
}
