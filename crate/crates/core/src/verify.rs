//! Oracles and diagnostics for the controller's guarantees.

use serde::Serialize;

use crate::controller::{safe_action, ControllerConfig};
use crate::error::{Error, Result};
use crate::manifold::{
    assemble, AugmentedState, Constraint, ConstraintSet, ControlAffineSystem, SlackModel, Variant,
};
use crate::numgeo::{pseudoinverse, Matrix, RankPolicy, Vector};

/// Default pass threshold for [`fd_jacobian_check`].
pub const FD_TOLERANCE: f64 = 1e-5;

/// Default step for [`fd_jacobian_check`].
pub const FD_STEP: f64 = 1e-6;

/// Margin added to `eta_c` by [`iss_bound_check`].
pub const ISS_MARGIN: f64 = 0.05;

/// `V = c^T c / 2`.
pub fn lyapunov_value(c: &Vector) -> f64 {
    0.5 * c.norm_squared()
}

/// `-lambda c^T J_u J_u^+ c`, the rate of `V` under the controller with
/// exact drift compensation.
pub fn lyapunov_rate(c: &Vector, j_u: &Matrix, lambda: f64) -> Result<f64> {
    if c.len() != j_u.nrows() {
        return Err(Error::DimensionMismatch {
            what: "residual",
            expected: j_u.nrows(),
            got: c.len(),
        });
    }
    let pinv = pseudoinverse(j_u, RankPolicy::default())?;
    let proj = j_u * (pinv * c);
    Ok(-lambda * c.dot(&proj))
}

/// Membership in the singular set: `J_u^T c = 0`, `mu = 0` and `c != 0`,
/// each decided with tolerance `tol`.
pub fn singularity_check(j_u: &Matrix, c: &Vector, mu: &Vector, tol: f64) -> bool {
    let grad = j_u.transpose() * c;
    grad.norm() <= tol && mu.norm() <= tol && c.norm() > tol
}

/// Largest `|J - J_fd| / (1 + |J|)` over all entries, with `J_fd` from
/// central differences of step `h`.
pub fn fd_jacobian_check(constraint: &dyn Constraint, x: &Vector, h: f64) -> f64 {
    assert!(h > 0.0, "finite-difference step must be positive");
    let analytic = constraint.jacobian(x);
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] += h;
        minus[j] -= h;
        let column = (constraint.eval(&plus) - constraint.eval(&minus)) / (2.0 * h);
        for i in 0..column.len() {
            let a = analytic[(i, j)];
            worst = worst.max((a - column[i]).abs() / (1.0 + a.abs()));
        }
    }
    worst
}

/// Sampled solution of an ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
}

impl Trajectory {
    pub fn last(&self) -> &Vector {
        self.states.last().expect("trajectory has the initial sample")
    }
}

/// Classical fourth-order Runge-Kutta with step `dt_fine`, sampled every
/// `sample_dt` (which must be a multiple of at least ten fine steps).
pub fn integrate_reference<F>(
    dynamics: F,
    x0: &Vector,
    duration: f64,
    dt_fine: f64,
    sample_dt: f64,
) -> Result<Trajectory>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    if !(dt_fine > 0.0 && sample_dt > 0.0 && duration >= 0.0) {
        return Err(Error::Parameter("integration steps must be positive".into()));
    }
    let per_sample = (sample_dt / dt_fine).round() as usize;
    if per_sample < 10 || ((per_sample as f64) * dt_fine - sample_dt).abs() > 1e-9 * sample_dt {
        return Err(Error::Parameter(format!(
            "dt_fine = {dt_fine} must divide sample_dt = {sample_dt} at least ten times"
        )));
    }
    let samples = (duration / sample_dt).round() as usize;
    let check = |v: Vector| -> Result<Vector> {
        if v.iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(Error::NonFinite("closed-loop dynamics"))
        }
    };
    let mut times = Vec::with_capacity(samples + 1);
    let mut states = Vec::with_capacity(samples + 1);
    let mut x = x0.clone();
    times.push(0.0);
    states.push(x.clone());
    let h = dt_fine;
    for s in 0..samples {
        for i in 0..per_sample {
            let t = s as f64 * sample_dt + i as f64 * h;
            let k1 = check(dynamics(t, &x)?)?;
            let k2 = check(dynamics(t + 0.5 * h, &(&x + &k1 * (0.5 * h)))?)?;
            let k3 = check(dynamics(t + 0.5 * h, &(&x + &k2 * (0.5 * h)))?)?;
            let k4 = check(dynamics(t + h, &(&x + &k3 * h))?)?;
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        times.push((s + 1) as f64 * sample_dt);
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum IssVerdict {
    Holds { sup_norm: f64 },
    Violated { sup_norm: f64 },
    /// `lambda < eta_J omega / eta_c`: the bound is not claimed.
    Inconclusive,
}

impl IssVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, IssVerdict::Holds { .. })
    }
}

/// Checks `sup ||c(t)|| <= eta_c + margin` over `t >= 5 / lambda`.
pub fn iss_bound_check(
    times: &[f64],
    residuals: &[Vector],
    omega: f64,
    lambda: f64,
    eta_j: f64,
    eta_c: f64,
) -> IssVerdict {
    if !(lambda >= eta_j * omega / eta_c) {
        return IssVerdict::Inconclusive;
    }
    let cutoff = 5.0 / lambda;
    let sup_norm = times
        .iter()
        .zip(residuals)
        .filter(|(t, _)| **t >= cutoff)
        .map(|(_, c)| c.norm())
        .fold(0.0, f64::max);
    if sup_norm <= eta_c + ISS_MARGIN {
        IssVerdict::Holds { sup_norm }
    } else {
        IssVerdict::Violated { sup_norm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub v: f64,
    pub v_dot_analytic: f64,
    pub v_dot_numeric: Option<f64>,
    pub max_violation: f64,
    pub singular: bool,
    pub rank_ok: bool,
    pub mu_norm: f64,
}

impl DiagnosticsReport {
    /// Diagnostics at one augmented point. A rank failure is reported in the
    /// flag, not as an error.
    pub fn at(
        j_u: &Matrix,
        c: &Vector,
        mu: &Vector,
        lambda: f64,
        max_violation: f64,
        tol: f64,
    ) -> Result<Self> {
        let rank = crate::numgeo::Factorization::new(j_u, RankPolicy::default())?.rank();
        Ok(Self {
            v: lyapunov_value(c),
            v_dot_analytic: lyapunov_rate(c, j_u, lambda)?,
            v_dot_numeric: None,
            max_violation,
            singular: singularity_check(j_u, c, mu, tol),
            rank_ok: rank == j_u.nrows(),
            mu_norm: mu.norm(),
        })
    }
}

/// Continuous-time closed loop on `x = [s; mu]` with the slack integrated as
/// a true state (no reset), a fixed agent action and an optional constant
/// additive state disturbance.
pub struct ClosedLoop<'a> {
    pub variant: Variant,
    pub system: &'a dyn ControlAffineSystem,
    pub constraints: &'a ConstraintSet,
    pub slack: SlackModel,
    pub config: ControllerConfig,
    pub action: Vector,
    pub disturbance: Option<Vector>,
}

impl ClosedLoop<'_> {
    pub fn split(&self, x: &Vector) -> (Vector, Vector) {
        let n = self.system.state_dim();
        let s = x.rows(0, n).into_owned();
        // tiny negative slack from an integrator stage is clamped to the
        // boundary
        let mu = x.rows(n, x.len() - n).map(|m| m.max(0.0));
        (s, mu)
    }

    pub fn join(s: &Vector, mu: &Vector) -> Vector {
        let mut x = Vector::zeros(s.len() + mu.len());
        x.rows_mut(0, s.len()).copy_from(s);
        x.rows_mut(s.len(), mu.len()).copy_from(mu);
        x
    }

    fn frame(&self, mu_dim: usize) -> Result<Matrix> {
        let n = self.system.control_dim() + mu_dim;
        let rows = mu_dim + self.constraints.equality_dim();
        self.config.frame(n, n.saturating_sub(rows))
    }

    /// Manifold residual at `x`.
    pub fn residual(&self, x: &Vector) -> Result<Vector> {
        let (s, mu) = self.split(x);
        crate::manifold::constraint_residual(self.constraints, &mu, &s)
    }

    /// `[s_dot; mu_dot]` together with the assembly used to compute it.
    pub fn evaluate(&self, x: &Vector) -> Result<(Vector, crate::manifold::AugmentedAssembly)> {
        let (s, mu) = self.split(x);
        let state = AugmentedState::new(s.clone(), mu.clone());
        let frame = self.frame(mu.len())?;
        let a = assemble(
            self.variant,
            self.system,
            self.constraints,
            &self.slack,
            &state,
            None,
            &frame,
            self.config.rank_policy,
        )?;
        let act = safe_action(&a, &self.action, &self.config)?;
        let mut s_dot =
            self.system.drift(&s, None) + self.system.input_matrix(&s, None) * &act.u_s;
        if let Some(d) = &self.disturbance {
            s_dot += d;
        }
        let alpha = crate::manifold::slack_alpha(&self.slack, &mu)?;
        let mu_dot = alpha.component_mul(&act.u_mu);
        Ok((Self::join(&s_dot, &mu_dot), a))
    }

    pub fn rhs(&self, x: &Vector) -> Result<Vector> {
        self.evaluate(x).map(|(dx, _)| dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{FnConstraint, LinearConstraint};
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn lyapunov_value_examples() {
        assert_eq!(lyapunov_value(&dvector![0.0]), 0.0);
        assert_relative_eq!(lyapunov_value(&dvector![0.3, -0.4]), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn lyapunov_rate_examples() {
        let j = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 2.0, 1.0]);
        assert_eq!(lyapunov_rate(&dvector![0.0, 0.0], &j, 1.0).unwrap(), 0.0);
        let c = dvector![0.3, -0.4];
        assert_relative_eq!(lyapunov_rate(&c, &j, 1.0).unwrap(), -0.25, epsilon = 1e-12);
        // c in the left kernel of a rank-one J_u
        let j = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let c = dvector![1.0, -1.0];
        assert_relative_eq!(lyapunov_rate(&c, &j, 3.0).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_set_of_downward_parabola() {
        // k(s) = -s^2 + 1 at (s, mu) = (0, 0): J_u = [0, alpha(0)] = [0, 0]
        let j_u = Matrix::from_row_slice(1, 2, &[0.0, 0.0]);
        assert!(singularity_check(&j_u, &dvector![1.0], &dvector![0.0], 1e-9));
        // on the manifold
        assert!(!singularity_check(&j_u, &dvector![0.0], &dvector![0.0], 1e-9));
        // positive slack
        assert!(!singularity_check(&j_u, &dvector![1.0], &dvector![0.5], 1e-9));
    }

    #[test]
    fn fd_check_examples() {
        let lin = LinearConstraint::new(Matrix::identity(1, 1), dvector![0.0]);
        assert!(fd_jacobian_check(&lin, &dvector![0.7], FD_STEP) <= 1e-9);
        let wrong = FnConstraint::new(
            "2x wrong",
            1,
            1,
            |x| dvector![x[0]],
            |_| Matrix::from_element(1, 1, 2.0),
        );
        let err = fd_jacobian_check(&wrong, &dvector![0.1], FD_STEP);
        assert_relative_eq!(err, 1.0 / 3.0, epsilon = 1e-6);
        assert!(err > FD_TOLERANCE);
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let lambda = 10.0;
        let traj = integrate_reference(
            |_, x| Ok(-x * lambda),
            &dvector![0.4],
            1.0,
            1e-3,
            1e-2,
        )
        .unwrap();
        for (t, x) in traj.times.iter().zip(&traj.states) {
            assert_relative_eq!(x[0], 0.4 * (-lambda * t).exp(), epsilon = 1e-6);
        }
    }

    #[test]
    fn rk4_zero_dynamics_is_constant() {
        let x0 = dvector![0.3, -0.2];
        let traj =
            integrate_reference(|_, x| Ok(x * 0.0), &x0, 2.0, 1e-3, 1e-2).unwrap();
        assert!(traj.states.iter().all(|x| x == &x0));
    }

    #[test]
    fn rk4_rejects_coarse_fine_step() {
        assert!(integrate_reference(|_, x| Ok(x.clone()), &dvector![1.0], 1.0, 5e-3, 1e-2).is_err());
        let blowup = integrate_reference(
            |_, _| Ok(dvector![f64::NAN]),
            &dvector![1.0],
            1.0,
            1e-3,
            1e-2,
        );
        assert!(matches!(blowup, Err(Error::NonFinite(_))));
    }

    #[test]
    fn iss_guard_and_disturbance_free_limit() {
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let cs: Vec<Vector> = times.iter().map(|t| dvector![(-10.0 * t).exp()]).collect();
        assert!(iss_bound_check(&times, &cs, 0.0, 10.0, 1.0, 0.05).holds());
        assert_eq!(
            iss_bound_check(&times, &cs, 0.1, 1.0, 1.0, 0.05),
            IssVerdict::Inconclusive
        );
    }
}
