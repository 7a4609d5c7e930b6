use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numgeo::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    /// `k(x) <= 0`
    Inequality,
    /// `l(x) = 0`
    Equality,
}

/// A vector-valued, continuously differentiable constraint function with an
/// analytic Jacobian.
///
/// `x` is whatever the owning variant evaluates constraints on: the plant
/// configuration `s`, or the stacked `[q; z]` for separable state spaces.
pub trait Constraint: Send + Sync {
    fn kind(&self) -> ConstraintKind {
        ConstraintKind::Inequality
    }

    /// Number of output rows.
    fn dim(&self) -> usize;

    /// Length of the input vector.
    fn input_dim(&self) -> usize;

    fn eval(&self, x: &Vector) -> Vector;

    /// `dim x input_dim` Jacobian.
    fn jacobian(&self, x: &Vector) -> Matrix;

    /// Time derivative of the Jacobian along `x_dot`, i.e. `(d/dx J) x_dot`.
    /// Needed by the second-order variant.
    fn jacobian_state_derivative(&self, _x: &Vector, _x_dot: &Vector) -> Option<Matrix> {
        None
    }

    fn name(&self) -> &str {
        "constraint"
    }
}

/// `k(x) = radius - ||x[offset..offset+dim] - center||`.
#[derive(Debug, Clone)]
pub struct DiskKeepOut {
    pub center: Vector,
    pub radius: f64,
    input_dim: usize,
}

impl DiskKeepOut {
    pub fn new(center: Vector, radius: f64) -> Self {
        let input_dim = center.len();
        Self {
            center,
            radius,
            input_dim,
        }
    }

    fn offset(&self, x: &Vector) -> Vector {
        x - &self.center
    }
}

impl Constraint for DiskKeepOut {
    fn dim(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn eval(&self, x: &Vector) -> Vector {
        Vector::from_element(1, self.radius - self.offset(x).norm())
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        let d = self.offset(x);
        let n = d.norm().max(f64::MIN_POSITIVE);
        Matrix::from_row_slice(1, self.input_dim, (-d / n).as_slice())
    }

    fn jacobian_state_derivative(&self, x: &Vector, x_dot: &Vector) -> Option<Matrix> {
        // d/dt (-d^T / |d|) = -(v - (n.v) n)^T / |d|
        let d = self.offset(x);
        let dist = d.norm().max(f64::MIN_POSITIVE);
        let n = d / dist;
        let tangential = x_dot - &n * n.dot(x_dot);
        Some(Matrix::from_row_slice(
            1,
            self.input_dim,
            (-tangential / dist).as_slice(),
        ))
    }

    fn name(&self) -> &str {
        "disk-keep-out"
    }
}

/// Distance constraints between a controllable point `q` and `count` moving
/// points stacked in `z`: `k_i(q, z) = radius - ||q - z_i||`, evaluated on
/// `x = [q; z_1; ...; z_count]`.
#[derive(Debug, Clone)]
pub struct MovingDiskKeepOut {
    pub point_dim: usize,
    pub count: usize,
    pub radius: f64,
}

impl MovingDiskKeepOut {
    pub fn new(point_dim: usize, count: usize, radius: f64) -> Self {
        Self {
            point_dim,
            count,
            radius,
        }
    }

    fn offset(&self, x: &Vector, i: usize) -> Vector {
        let p = self.point_dim;
        x.rows(0, p) - x.rows(p * (i + 1), p)
    }
}

impl Constraint for MovingDiskKeepOut {
    fn dim(&self) -> usize {
        self.count
    }

    fn input_dim(&self) -> usize {
        self.point_dim * (self.count + 1)
    }

    fn eval(&self, x: &Vector) -> Vector {
        Vector::from_fn(self.count, |i, _| self.radius - self.offset(x, i).norm())
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        let p = self.point_dim;
        let mut jac = Matrix::zeros(self.count, self.input_dim());
        for i in 0..self.count {
            let d = self.offset(x, i);
            let n = d.norm().max(f64::MIN_POSITIVE);
            for a in 0..p {
                jac[(i, a)] = -d[a] / n;
                jac[(i, p * (i + 1) + a)] = d[a] / n;
            }
        }
        jac
    }

    fn name(&self) -> &str {
        "moving-disk-keep-out"
    }
}

/// Axis-aligned box: rows `lower_i - x_i` and `x_i - upper_i` for every axis,
/// interleaved per axis.
#[derive(Debug, Clone)]
pub struct BoxBounds {
    pub lower: Vector,
    pub upper: Vector,
}

impl BoxBounds {
    pub fn new(lower: Vector, upper: Vector) -> Self {
        assert_eq!(lower.len(), upper.len(), "box bound dimensions differ");
        Self { lower, upper }
    }
}

impl Constraint for BoxBounds {
    fn dim(&self) -> usize {
        2 * self.lower.len()
    }

    fn input_dim(&self) -> usize {
        self.lower.len()
    }

    fn eval(&self, x: &Vector) -> Vector {
        Vector::from_fn(self.dim(), |r, _| {
            let axis = r / 2;
            if r % 2 == 0 {
                self.lower[axis] - x[axis]
            } else {
                x[axis] - self.upper[axis]
            }
        })
    }

    fn jacobian(&self, _x: &Vector) -> Matrix {
        Matrix::from_fn(self.dim(), self.input_dim(), |r, c| {
            if r / 2 != c {
                0.0
            } else if r % 2 == 0 {
                -1.0
            } else {
                1.0
            }
        })
    }

    fn jacobian_state_derivative(&self, _x: &Vector, _x_dot: &Vector) -> Option<Matrix> {
        Some(Matrix::zeros(self.dim(), self.input_dim()))
    }

    fn name(&self) -> &str {
        "box-bounds"
    }
}

/// `k(x) = A x + b`
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub a: Matrix,
    pub b: Vector,
    pub kind: ConstraintKind,
}

impl LinearConstraint {
    pub fn new(a: Matrix, b: Vector) -> Self {
        Self {
            a,
            b,
            kind: ConstraintKind::Inequality,
        }
    }
}

impl Constraint for LinearConstraint {
    fn kind(&self) -> ConstraintKind {
        self.kind
    }

    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.a.ncols()
    }

    fn eval(&self, x: &Vector) -> Vector {
        &self.a * x + &self.b
    }

    fn jacobian(&self, _x: &Vector) -> Matrix {
        self.a.clone()
    }

    fn jacobian_state_derivative(&self, _x: &Vector, _x_dot: &Vector) -> Option<Matrix> {
        Some(Matrix::zeros(self.a.nrows(), self.a.ncols()))
    }

    fn name(&self) -> &str {
        "linear"
    }
}

/// Equality constraint `l(x) = ||x - center||^2 - radius^2`.
#[derive(Debug, Clone)]
pub struct SphereEquality {
    pub center: Vector,
    pub radius: f64,
}

impl Constraint for SphereEquality {
    fn kind(&self) -> ConstraintKind {
        ConstraintKind::Equality
    }

    fn dim(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        self.center.len()
    }

    fn eval(&self, x: &Vector) -> Vector {
        Vector::from_element(1, (x - &self.center).norm_squared() - self.radius * self.radius)
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        let d = (x - &self.center) * 2.0;
        Matrix::from_row_slice(1, d.len(), d.as_slice())
    }

    fn jacobian_state_derivative(&self, _x: &Vector, x_dot: &Vector) -> Option<Matrix> {
        let d = x_dot * 2.0;
        Some(Matrix::from_row_slice(1, d.len(), d.as_slice()))
    }

    fn name(&self) -> &str {
        "sphere-equality"
    }
}

type EvalFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type JacFn = dyn Fn(&Vector) -> Matrix + Send + Sync;
type JacDotFn = dyn Fn(&Vector, &Vector) -> Matrix + Send + Sync;

/// Constraint assembled from closures, for one-off geometry.
pub struct FnConstraint {
    name: String,
    kind: ConstraintKind,
    dim: usize,
    input_dim: usize,
    eval: Box<EvalFn>,
    jacobian: Box<JacFn>,
    jacobian_dot: Option<Box<JacDotFn>>,
}

impl FnConstraint {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        input_dim: usize,
        eval: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        jacobian: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            kind: ConstraintKind::Inequality,
            dim,
            input_dim,
            eval: Box::new(eval),
            jacobian: Box::new(jacobian),
            jacobian_dot: None,
        }
    }

    pub fn with_kind(mut self, kind: ConstraintKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_jacobian_derivative(
        mut self,
        f: impl Fn(&Vector, &Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.jacobian_dot = Some(Box::new(f));
        self
    }
}

impl fmt::Debug for FnConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnConstraint")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("input_dim", &self.input_dim)
            .finish()
    }
}

impl Constraint for FnConstraint {
    fn kind(&self) -> ConstraintKind {
        self.kind
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn eval(&self, x: &Vector) -> Vector {
        (self.eval)(x)
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        (self.jacobian)(x)
    }

    fn jacobian_state_derivative(&self, x: &Vector, x_dot: &Vector) -> Option<Matrix> {
        self.jacobian_dot.as_ref().map(|f| f(x, x_dot))
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// An ordered collection of constraints sharing one input vector.
///
/// Stacked outputs list every inequality row first (in insertion order),
/// then every equality row.
#[derive(Clone, Default)]
pub struct ConstraintSet {
    items: Vec<Arc<dyn Constraint>>,
}

impl fmt::Debug for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.items.iter().map(|c| c.name().to_string()))
            .finish()
    }
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, c: impl Constraint + 'static) -> Self {
        self.push(Arc::new(c));
        self
    }

    pub fn push(&mut self, c: Arc<dyn Constraint>) {
        if let Some(first) = self.items.first() {
            assert_eq!(
                first.input_dim(),
                c.input_dim(),
                "constraints in a set must share one input dimension"
            );
        }
        self.items.push(c);
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<dyn Constraint>> {
        self.items.iter()
    }

    pub fn input_dim(&self) -> usize {
        self.items.first().map_or(0, |c| c.input_dim())
    }

    fn of_kind(&self, kind: ConstraintKind) -> impl Iterator<Item = &Arc<dyn Constraint>> {
        self.items.iter().filter(move |c| c.kind() == kind)
    }

    pub fn inequality_dim(&self) -> usize {
        self.of_kind(ConstraintKind::Inequality).map(|c| c.dim()).sum()
    }

    pub fn equality_dim(&self) -> usize {
        self.of_kind(ConstraintKind::Equality).map(|c| c.dim()).sum()
    }

    pub fn total_dim(&self) -> usize {
        self.inequality_dim() + self.equality_dim()
    }

    fn check_input(&self, x: &Vector) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "constraint input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn stack_values(&self, kind: ConstraintKind, x: &Vector) -> Vector {
        let parts: Vec<Vector> = self.of_kind(kind).map(|c| c.eval(x)).collect();
        let total = parts.iter().map(|p| p.len()).sum();
        let mut out = Vector::zeros(total);
        let mut row = 0;
        for p in parts {
            out.rows_mut(row, p.len()).copy_from(&p);
            row += p.len();
        }
        out
    }

    fn stack_rows(&self, kind: ConstraintKind, f: impl Fn(&dyn Constraint) -> Matrix) -> Matrix {
        let parts: Vec<Matrix> = self.of_kind(kind).map(|c| f(c.as_ref())).collect();
        let total = parts.iter().map(|p| p.nrows()).sum();
        let mut out = Matrix::zeros(total, self.input_dim());
        let mut row = 0;
        for p in parts {
            out.view_mut((row, 0), (p.nrows(), p.ncols())).copy_from(&p);
            row += p.nrows();
        }
        out
    }

    /// Stacked inequality values `k(x)`.
    pub fn eval_inequality(&self, x: &Vector) -> Result<Vector> {
        self.check_input(x)?;
        Ok(self.stack_values(ConstraintKind::Inequality, x))
    }

    /// Stacked equality values `l(x)`.
    pub fn eval_equality(&self, x: &Vector) -> Result<Vector> {
        self.check_input(x)?;
        Ok(self.stack_values(ConstraintKind::Equality, x))
    }

    pub fn jacobian_inequality(&self, x: &Vector) -> Result<Matrix> {
        self.check_input(x)?;
        Ok(self.stack_rows(ConstraintKind::Inequality, |c| c.jacobian(x)))
    }

    pub fn jacobian_equality(&self, x: &Vector) -> Result<Matrix> {
        self.check_input(x)?;
        Ok(self.stack_rows(ConstraintKind::Equality, |c| c.jacobian(x)))
    }

    /// `(d/dx J_k) x_dot` for the inequality rows; fails if any constraint
    /// lacks the derivative.
    pub fn jacobian_derivative_inequality(&self, x: &Vector, x_dot: &Vector) -> Result<Matrix> {
        self.check_input(x)?;
        for c in self.of_kind(ConstraintKind::Inequality) {
            if c.jacobian_state_derivative(x, x_dot).is_none() {
                return Err(Error::MissingInput(format!(
                    "constraint `{}` provides no Jacobian time derivative",
                    c.name()
                )));
            }
        }
        Ok(self.stack_rows(ConstraintKind::Inequality, |c| {
            c.jacobian_state_derivative(x, x_dot).expect("checked above")
        }))
    }
}
