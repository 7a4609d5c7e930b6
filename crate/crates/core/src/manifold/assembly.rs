use serde::{Deserialize, Serialize};

use super::constraints::ConstraintSet;
use super::slack::{slack_alpha, SlackModel};
use super::system::{ControlAffineSystem, SystemOrder};
use crate::error::{Error, Result};
use crate::numgeo::{procrustes_align, Factorization, Matrix, RankPolicy, Vector};

/// Problem layouts the manifold can be assembled for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    /// Inequalities on a first-order plant.
    FirstOrder,
    /// Inequalities on a second-order plant, lifted to
    /// `k* = zeta_gain * k + J_k s_dot`.
    SecondOrder { zeta_gain: f64 },
    /// State split into a controllable part `q` and an uncontrollable part
    /// `z` whose velocity enters the drift.
    Separable,
    /// Inequalities plus equality rows on a first-order plant.
    Equality,
}

impl Variant {
    pub const DEFAULT_ZETA_GAIN: f64 = 1.0;

    pub fn label(&self) -> &'static str {
        match self {
            Variant::FirstOrder => "first_order",
            Variant::SecondOrder { .. } => "second_order",
            Variant::Separable => "separable",
            Variant::Equality => "equality",
        }
    }
}

/// Plant state plus slack values at which the manifold geometry is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    /// Directly controllable configuration (`q` in the separable variant).
    pub s: Vector,
    /// Uncontrollable state, separable variant only.
    pub z: Option<Vector>,
    /// Velocity, second-order variant only.
    pub s_dot: Option<Vector>,
    pub mu: Vector,
}

impl AugmentedState {
    pub fn new(s: Vector, mu: Vector) -> Self {
        Self {
            s,
            z: None,
            s_dot: None,
            mu,
        }
    }

    pub fn with_z(mut self, z: Vector) -> Self {
        self.z = Some(z);
        self
    }

    pub fn with_velocity(mut self, s_dot: Vector) -> Self {
        self.s_dot = Some(s_dot);
        self
    }
}

/// Everything the safe controller needs at one instant: the augmented
/// Jacobian `J_u`, the constraint drift `psi`, the residual `c`, and the
/// tangent frame `B_u`.
#[derive(Debug, Clone)]
pub struct AugmentedAssembly {
    pub j_u: Matrix,
    pub psi: Vector,
    pub c: Vector,
    pub b_u: Matrix,
    /// Constraint rows (`k`, `k*` or `[k; l]`) before adding slack.
    pub constraint_values: Vector,
    /// Jacobian of the constraint rows w.r.t. the controllable state.
    pub j_k: Matrix,
    pub control_dim: usize,
    pub control_bounds: Vec<(f64, f64)>,
    j_u_pinv: Matrix,
}

impl AugmentedAssembly {
    /// Builds an assembly from an explicit `(J_u, psi, c)` triple. The first
    /// `control_dim` columns of `J_u` belong to the plant control.
    pub fn from_parts(
        j_u: Matrix,
        psi: Vector,
        c: Vector,
        control_dim: usize,
        control_bounds: Vec<(f64, f64)>,
        reference: &Matrix,
        policy: RankPolicy,
    ) -> Result<Self> {
        let rows = j_u.nrows();
        if psi.len() != rows || c.len() != rows {
            return Err(Error::DimensionMismatch {
                what: "drift/residual rows",
                expected: rows,
                got: psi.len().min(c.len()),
            });
        }
        if control_dim > j_u.ncols() || control_bounds.len() != control_dim {
            return Err(Error::DimensionMismatch {
                what: "control dimension",
                expected: control_dim,
                got: control_bounds.len(),
            });
        }
        if reference.nrows() != j_u.ncols() {
            return Err(Error::DimensionMismatch {
                what: "reference frame rows",
                expected: j_u.ncols(),
                got: reference.nrows(),
            });
        }
        let fact = Factorization::new(&j_u, policy)?;
        let rank = fact.rank();
        if rank < rows {
            return Err(Error::RankDeficient {
                rank,
                expected: rows,
            });
        }
        let raw = fact.kernel();
        if raw.ncols() != reference.ncols() {
            return Err(Error::FrameMismatch {
                kernel: raw.ncols(),
                frame: reference.ncols(),
            });
        }
        let b_u = procrustes_align(&raw, reference)?;
        Ok(Self {
            j_u_pinv: fact.pseudoinverse(),
            constraint_values: Vector::zeros(rows),
            j_k: Matrix::zeros(rows, 0),
            j_u,
            psi,
            c,
            b_u,
            control_dim,
            control_bounds,
        })
    }

    pub fn rows(&self) -> usize {
        self.j_u.nrows()
    }

    pub fn slack_dim(&self) -> usize {
        self.j_u.ncols() - self.control_dim
    }

    /// Dimension of the tangent space, i.e. of the agent's action.
    pub fn action_dim(&self) -> usize {
        self.b_u.ncols()
    }

    pub fn pseudoinverse(&self) -> &Matrix {
        &self.j_u_pinv
    }
}

/// `k* = zeta_gain * k + J_k s_dot`.
pub fn second_order_constraint(
    k_value: &Vector,
    k_jacobian: &Matrix,
    s_dot: &Vector,
    zeta_gain: f64,
) -> Result<Vector> {
    if !(zeta_gain > 0.0) {
        return Err(Error::Parameter(format!(
            "zeta gain must be > 0, got {zeta_gain}"
        )));
    }
    Ok(k_value * zeta_gain + k_jacobian * s_dot)
}

/// `[k(x) + mu; l(x)]`. Zero exactly on the constraint manifold.
pub fn constraint_residual(constraints: &ConstraintSet, mu: &Vector, x: &Vector) -> Result<Vector> {
    let k = constraints.eval_inequality(x)?;
    if k.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            what: "slack vector",
            expected: k.len(),
            got: mu.len(),
        });
    }
    let l = constraints.eval_equality(x)?;
    Ok(stack(&(k + mu), &l))
}

fn stack(a: &Vector, b: &Vector) -> Vector {
    let mut out = Vector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// Input vector the constraint set is evaluated on for this variant.
pub(crate) fn constraint_input(variant: Variant, s: &Vector, z: Option<&Vector>) -> Result<Vector> {
    match variant {
        Variant::Separable => {
            let z = z.ok_or_else(|| {
                Error::MissingInput("separable variant needs the uncontrollable state z".into())
            })?;
            Ok(stack(s, z))
        }
        _ => Ok(s.clone()),
    }
}

/// Inequality rows the slack variables pair with: `k(x)`, or `k*` for the
/// second-order variant.
pub fn inequality_values(
    variant: Variant,
    constraints: &ConstraintSet,
    s: &Vector,
    z: Option<&Vector>,
    s_dot: Option<&Vector>,
) -> Result<Vector> {
    let x = constraint_input(variant, s, z)?;
    let k = constraints.eval_inequality(&x)?;
    match variant {
        Variant::SecondOrder { zeta_gain } => {
            let s_dot = s_dot.ok_or_else(|| {
                Error::MissingInput("second-order variant needs the velocity s_dot".into())
            })?;
            let j_k = constraints.jacobian_inequality(&x)?;
            second_order_constraint(&k, &j_k, s_dot, zeta_gain)
        }
        _ => Ok(k),
    }
}

fn check_layout(
    variant: Variant,
    system: &dyn ControlAffineSystem,
    constraints: &ConstraintSet,
    state: &AugmentedState,
) -> Result<()> {
    let expected_order = match variant {
        Variant::SecondOrder { .. } => SystemOrder::Second,
        _ => SystemOrder::First,
    };
    if system.order() != expected_order {
        return Err(Error::Parameter(format!(
            "{} variant needs a {:?}-order system",
            variant.label(),
            expected_order
        )));
    }
    let has_equality = constraints.equality_dim() > 0;
    match (variant, has_equality) {
        (Variant::Equality, false) => {
            return Err(Error::MissingInput(
                "equality variant without equality constraints".into(),
            ))
        }
        (Variant::Equality, true) | (_, false) => {}
        (_, true) => {
            return Err(Error::Parameter(format!(
                "equality constraints are only supported by the equality variant, not {}",
                variant.label()
            )))
        }
    }
    if state.s.len() != system.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "state s",
            expected: system.state_dim(),
            got: state.s.len(),
        });
    }
    if state.mu.len() != constraints.inequality_dim() {
        return Err(Error::DimensionMismatch {
            what: "slack vector",
            expected: constraints.inequality_dim(),
            got: state.mu.len(),
        });
    }
    if let (Variant::SecondOrder { .. }, Some(v)) = (variant, state.s_dot.as_ref()) {
        if v.len() != system.state_dim() {
            return Err(Error::DimensionMismatch {
                what: "velocity s_dot",
                expected: system.state_dim(),
                got: v.len(),
            });
        }
    }
    Ok(())
}

/// Assembles `(J_u, psi, c, B_u)` for `variant` at `state`.
///
/// `z_dot` is the (observed) velocity of the uncontrollable state and is
/// required by the separable variant. `reference` is the persistent frame the
/// tangent basis is aligned to.
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    variant: Variant,
    system: &dyn ControlAffineSystem,
    constraints: &ConstraintSet,
    slack: &SlackModel,
    state: &AugmentedState,
    z_dot: Option<&Vector>,
    reference: &Matrix,
    policy: RankPolicy,
) -> Result<AugmentedAssembly> {
    check_layout(variant, system, constraints, state)?;
    let s = &state.s;
    let s_dot = state.s_dot.as_ref();
    let x = constraint_input(variant, s, state.z.as_ref())?;
    if x.len() != constraints.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "constraint input",
            expected: constraints.input_dim(),
            got: x.len(),
        });
    }

    let n_s = system.state_dim();
    let f = system.drift(s, s_dot);
    let g = system.input_matrix(s, s_dot);
    let alpha = slack_alpha(slack, &state.mu)?;

    let k = constraints.eval_inequality(&x)?;
    let j_full = constraints.jacobian_inequality(&x)?;
    // Jacobian w.r.t. the controllable coordinates only
    let j_k: Matrix = j_full.columns(0, n_s).into_owned();

    let (k_rows, psi_k) = match variant {
        Variant::FirstOrder | Variant::Equality => (k, &j_k * &f),
        Variant::Separable => {
            let z_dot = z_dot.ok_or_else(|| {
                Error::MissingInput("separable variant needs z_dot (possibly zero)".into())
            })?;
            let n_z = x.len() - n_s;
            if z_dot.len() != n_z {
                return Err(Error::DimensionMismatch {
                    what: "z_dot",
                    expected: n_z,
                    got: z_dot.len(),
                });
            }
            let j_z = j_full.columns(n_s, n_z);
            (k, &j_k * &f + j_z * z_dot)
        }
        Variant::SecondOrder { zeta_gain } => {
            let v = s_dot.ok_or_else(|| {
                Error::MissingInput("second-order variant needs the velocity s_dot".into())
            })?;
            let j_dot = constraints.jacobian_derivative_inequality(&x, v)?;
            let k_star = second_order_constraint(&k, &j_k, v, zeta_gain)?;
            let psi = &j_k * &f + (&j_k * zeta_gain + j_dot) * v;
            (k_star, psi)
        }
    };

    let (l, j_l) = if variant == Variant::Equality {
        (
            constraints.eval_equality(&x)?,
            constraints.jacobian_equality(&x)?.columns(0, n_s).into_owned(),
        )
    } else {
        (Vector::zeros(0), Matrix::zeros(0, n_s))
    };

    let n_k = k_rows.len();
    let n_l = l.len();
    let n_u = system.control_dim();
    let rows = n_k + n_l;

    let mut j_u = Matrix::zeros(rows, n_u + n_k);
    j_u.view_mut((0, 0), (n_k, n_u)).copy_from(&(&j_k * &g));
    for i in 0..n_k {
        j_u[(i, n_u + i)] = alpha[i];
    }
    if n_l > 0 {
        j_u.view_mut((n_k, 0), (n_l, n_u)).copy_from(&(&j_l * &g));
    }

    let psi = stack(&psi_k, &(&j_l * &f));
    let c = stack(&(&k_rows + &state.mu), &l);
    let constraint_values = stack(&k_rows, &l);
    let mut j_stack = Matrix::zeros(rows, n_s);
    j_stack.view_mut((0, 0), (n_k, n_s)).copy_from(&j_k);
    if n_l > 0 {
        j_stack.view_mut((n_k, 0), (n_l, n_s)).copy_from(&j_l);
    }

    let mut out = AugmentedAssembly::from_parts(
        j_u,
        psi,
        c,
        n_u,
        system.control_bounds().to_vec(),
        reference,
        policy,
    )?;
    out.constraint_values = constraint_values;
    out.j_k = j_stack;
    Ok(out)
}
