use crate::error::{Error, Result};
use crate::numgeo::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemOrder {
    /// `s_dot = f(s) + G(s) u`
    First,
    /// `s_ddot = f(s, s_dot) + G(s, s_dot) u`
    Second,
}

/// Control-affine plant. For first-order systems `s_dot` is ignored.
pub trait ControlAffineSystem: Send + Sync {
    fn order(&self) -> SystemOrder;

    /// Dimension of the configuration `s`.
    fn state_dim(&self) -> usize;

    fn control_dim(&self) -> usize;

    fn drift(&self, s: &Vector, s_dot: Option<&Vector>) -> Vector;

    fn input_matrix(&self, s: &Vector, s_dot: Option<&Vector>) -> Matrix;

    /// Per-dimension `[lo, hi]` control limits.
    fn control_bounds(&self) -> &[(f64, f64)];
}

/// Clips `u` to `bounds`, returning whether any entry moved.
pub fn clip_to_bounds(u: &Vector, bounds: &[(f64, f64)]) -> (Vector, bool) {
    let mut clipped = false;
    let out = Vector::from_fn(u.len(), |i, _| {
        let (lo, hi) = bounds[i];
        let v = u[i].clamp(lo, hi);
        if v != u[i] {
            clipped = true;
        }
        v
    });
    (out, clipped)
}

fn symmetric_bounds(dim: usize, limit: f64) -> Vec<(f64, f64)> {
    vec![(-limit, limit); dim]
}

/// `s_dot = u`
#[derive(Debug, Clone)]
pub struct SingleIntegrator {
    dim: usize,
    bounds: Vec<(f64, f64)>,
}

impl SingleIntegrator {
    pub fn new(dim: usize, v_max: f64) -> Self {
        Self {
            dim,
            bounds: symmetric_bounds(dim, v_max),
        }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self::new(dim, f64::INFINITY)
    }
}

impl ControlAffineSystem for SingleIntegrator {
    fn order(&self) -> SystemOrder {
        SystemOrder::First
    }

    fn state_dim(&self) -> usize {
        self.dim
    }

    fn control_dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, _s: &Vector, _s_dot: Option<&Vector>) -> Vector {
        Vector::zeros(self.dim)
    }

    fn input_matrix(&self, _s: &Vector, _s_dot: Option<&Vector>) -> Matrix {
        Matrix::identity(self.dim, self.dim)
    }

    fn control_bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
}

/// `s_ddot = u`
#[derive(Debug, Clone)]
pub struct DoubleIntegrator {
    dim: usize,
    bounds: Vec<(f64, f64)>,
}

impl DoubleIntegrator {
    pub fn new(dim: usize, a_max: f64) -> Self {
        Self {
            dim,
            bounds: symmetric_bounds(dim, a_max),
        }
    }
}

impl ControlAffineSystem for DoubleIntegrator {
    fn order(&self) -> SystemOrder {
        SystemOrder::Second
    }

    fn state_dim(&self) -> usize {
        self.dim
    }

    fn control_dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, _s: &Vector, _s_dot: Option<&Vector>) -> Vector {
        Vector::zeros(self.dim)
    }

    fn input_matrix(&self, _s: &Vector, _s_dot: Option<&Vector>) -> Matrix {
        Matrix::identity(self.dim, self.dim)
    }

    fn control_bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
}

/// First-order linear plant `s_dot = A s + B u`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    a: Matrix,
    b: Matrix,
    bounds: Vec<(f64, f64)>,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.nrows() {
            return Err(Error::DimensionMismatch {
                what: "linear system matrices",
                expected: a.nrows(),
                got: b.nrows(),
            });
        }
        let bounds = symmetric_bounds(b.ncols(), f64::INFINITY);
        Ok(Self { a, b, bounds })
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        assert_eq!(bounds.len(), self.b.ncols());
        self.bounds = bounds;
        self
    }
}

impl ControlAffineSystem for LinearSystem {
    fn order(&self) -> SystemOrder {
        SystemOrder::First
    }

    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    fn drift(&self, s: &Vector, _s_dot: Option<&Vector>) -> Vector {
        &self.a * s
    }

    fn input_matrix(&self, _s: &Vector, _s_dot: Option<&Vector>) -> Matrix {
        self.b.clone()
    }

    fn control_bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn clipping_reports_saturation() {
        let b = [(-1.0, 1.0), (-1.0, 1.0)];
        let (u, sat) = clip_to_bounds(&dvector![0.5, -0.2], &b);
        assert!(!sat);
        assert_eq!(u, dvector![0.5, -0.2]);
        let (u, sat) = clip_to_bounds(&dvector![1.5, -0.2], &b);
        assert!(sat);
        assert_eq!(u, dvector![1.0, -0.2]);
    }

    #[test]
    fn linear_system_shapes() {
        assert!(LinearSystem::new(Matrix::identity(2, 2), Matrix::identity(3, 1)).is_err());
        let sys = LinearSystem::new(Matrix::identity(2, 2) * -1.0, Matrix::identity(2, 2)).unwrap();
        assert_eq!(sys.drift(&dvector![1.0, 2.0], None), dvector![-1.0, -2.0]);
    }
}
