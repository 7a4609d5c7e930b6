//! Small dense linear-algebra kernels.
//!
//! Everything here works on `nalgebra` dynamic matrices of at most a few tens
//! of rows and columns. Rank decisions are made once, from a singular value
//! decomposition, under a [`RankPolicy`]: the pseudoinverse, the kernel basis
//! and the smoothly varying tangent frame all share the same threshold.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

// nalgebra's own default convergence threshold.
const SVD_EPS: f64 = 5.0 * f64::EPSILON;

/// Thin SVD `m = u diag(sigma) v_t`, checked by recomposition.
///
/// nalgebra's dynamic SVD occasionally stops on a decomposition that does not
/// reproduce its input (errors of order 1e-3 on well-conditioned 3 x 3
/// matrices). Those cases fall back to one-sided Jacobi.
fn checked_svd(m: &Matrix) -> Result<(Matrix, Vector, Matrix)> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    // good decompositions land within ~1e-11 relative (2 x 2 inputs are the
    // least accurate), bad ones are off by ~1e-3
    let tol = 1e-10 * scale;
    let recompose =
        |u: &Matrix, s: &Vector, v_t: &Matrix| (u * Matrix::from_diagonal(s) * v_t - m).amax();
    if let Some(svd) = SVD::try_new(m.clone(), true, true, SVD_EPS, 0) {
        let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
        if recompose(&u, &svd.singular_values, &v_t) <= tol {
            return Ok((u, svd.singular_values, v_t));
        }
    }
    let (u, s, v_t) = if m.nrows() >= m.ncols() {
        jacobi_svd(m)?
    } else {
        let (u, s, v_t) = jacobi_svd(&m.transpose())?;
        (v_t.transpose(), s, u.transpose())
    };
    if recompose(&u, &s, &v_t) <= tol {
        Ok((u, s, v_t))
    } else {
        Err(Error::NoConvergence)
    }
}

/// One-sided (Hestenes) Jacobi SVD of a tall or square matrix.
fn jacobi_svd(m: &Matrix) -> Result<(Matrix, Vector, Matrix)> {
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut v = Matrix::identity(cols, cols);
    // columns below this squared norm are numerically zero; rotating them
    // against each other only shuffles rounding noise
    let floor = (f64::EPSILON * m.norm()).powi(2);
    let mut converged = false;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if alpha <= floor
                    || beta <= floor
                    || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * x - s * y;
                        mat[(i, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence);
    }
    let sigma = Vector::from_fn(cols, |j, _| a.column(j).norm());
    let sigma_max = sigma.max();
    let mut u = Matrix::zeros(rows, cols);
    let mut filled = Vec::new();
    for j in 0..cols {
        if sigma[j] > f64::EPSILON * sigma_max && sigma[j] > 0.0 {
            u.set_column(j, &(a.column(j) / sigma[j]));
            filled.push(j);
        }
    }
    // complete U with unit vectors orthogonal to the columns found so far
    for j in 0..cols {
        if filled.contains(&j) {
            continue;
        }
        for e in 0..rows {
            let mut w = Vector::zeros(rows);
            w[e] = 1.0;
            for &k in &filled {
                let uk = u.column(k).into_owned();
                w -= &uk * uk.dot(&w);
            }
            if w.norm() > 0.5 {
                u.set_column(j, &w.normalize());
                filled.push(j);
                break;
            }
        }
    }
    Ok((u, sigma, v.transpose()))
}

/// Singular values below `relative_tolerance * sigma_max` count as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankPolicy {
    relative_tolerance: f64,
}

impl RankPolicy {
    pub const DEFAULT_TOLERANCE: f64 = 1e-10;

    pub fn new(relative_tolerance: f64) -> Result<Self> {
        if !(relative_tolerance > 0.0 && relative_tolerance < 1.0) {
            return Err(Error::Parameter(format!(
                "relative rank tolerance must lie in (0, 1), got {relative_tolerance}"
            )));
        }
        Ok(Self { relative_tolerance })
    }

    pub fn relative_tolerance(&self) -> f64 {
        self.relative_tolerance
    }

    fn threshold(&self, sigma_max: f64) -> f64 {
        self.relative_tolerance * sigma_max
    }
}

impl Default for RankPolicy {
    fn default() -> Self {
        Self {
            relative_tolerance: Self::DEFAULT_TOLERANCE,
        }
    }
}

/// A rank-revealing singular value decomposition of a `rows x cols` matrix.
///
/// Wide matrices are padded with zero rows to a square matrix first, so the
/// right singular vectors always form a complete basis of `R^cols` and the
/// kernel can be read off directly.
#[derive(Debug, Clone)]
pub struct Factorization {
    rows: usize,
    cols: usize,
    u: Matrix,
    v_t: Matrix,
    singular_values: Vector,
    threshold: f64,
}

impl Factorization {
    pub fn new(m: &Matrix, policy: RankPolicy) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                what: "matrix (empty)",
                expected: 1,
                got: 0,
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix);
        }
        let (rows, cols) = m.shape();
        let work = if rows < cols {
            let mut padded = Matrix::zeros(cols, cols);
            padded.view_mut((0, 0), (rows, cols)).copy_from(m);
            padded
        } else {
            m.clone()
        };
        let (u, singular_values, v_t) = checked_svd(&work)?;
        let sigma_max = singular_values.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            rows,
            cols,
            u,
            v_t,
            singular_values,
            threshold: policy.threshold(sigma_max),
        })
    }

    fn is_nonzero(&self, sigma: f64) -> bool {
        sigma > self.threshold && sigma > 0.0
    }

    pub fn rank(&self) -> usize {
        self.singular_values
            .iter()
            .filter(|s| self.is_nonzero(**s))
            .count()
    }

    pub fn singular_values(&self) -> &Vector {
        &self.singular_values
    }

    /// Moore-Penrose pseudoinverse (`cols x rows`).
    pub fn pseudoinverse(&self) -> Matrix {
        let mut pinv = Matrix::zeros(self.cols, self.rows);
        for (i, &sigma) in self.singular_values.iter().enumerate() {
            if !self.is_nonzero(sigma) {
                continue;
            }
            let v = self.v_t.row(i).transpose();
            let u = self.u.view((0, i), (self.rows, 1));
            pinv += (v * u.transpose()) / sigma;
        }
        pinv
    }

    /// Orthonormal basis of the kernel, one column per zero singular value.
    /// May have zero columns.
    pub fn kernel(&self) -> Matrix {
        let null: Vec<usize> = (0..self.cols)
            .filter(|&i| !self.is_nonzero(self.singular_values[i]))
            .collect();
        let mut basis = Matrix::zeros(self.cols, null.len());
        for (j, &i) in null.iter().enumerate() {
            basis.set_column(j, &self.v_t.row(i).transpose());
        }
        basis
    }
}

pub fn pseudoinverse(m: &Matrix, policy: RankPolicy) -> Result<Matrix> {
    Ok(Factorization::new(m, policy)?.pseudoinverse())
}

/// Orthonormal basis `B` (N x (N - r)) with `J B = 0`.
pub fn nullspace_basis(j: &Matrix, policy: RankPolicy) -> Result<Matrix> {
    let fact = Factorization::new(j, policy)?;
    let basis = fact.kernel();
    if basis.ncols() == 0 {
        return Err(Error::EmptyKernel { rank: fact.rank() });
    }
    Ok(basis)
}

/// Rotates an orthonormal basis `raw` (N x U) of some subspace so that it is
/// as close as possible to the reference frame `reference` (N x U):
/// `argmin_Q || (raw Q)^T T - I ||_F` over orthogonal `Q`.
///
/// The result depends only on the column space of `raw` and on `reference`,
/// not on which particular basis of that space was passed in.
pub fn procrustes_align(raw: &Matrix, reference: &Matrix) -> Result<Matrix> {
    if raw.shape() != reference.shape() {
        return Err(Error::FrameMismatch {
            kernel: raw.ncols(),
            frame: reference.ncols(),
        });
    }
    let cross = raw.transpose() * reference;
    let (u, _, v_t) = checked_svd(&cross)?;
    let q = u * v_t;
    Ok(raw * q)
}

/// Kernel basis of `j` that varies smoothly with `j`, aligned to `reference`.
pub fn smooth_basis(j: &Matrix, reference: &Matrix, policy: RankPolicy) -> Result<Matrix> {
    if reference.nrows() != j.ncols() {
        return Err(Error::DimensionMismatch {
            what: "reference frame rows",
            expected: j.ncols(),
            got: reference.nrows(),
        });
    }
    let raw = Factorization::new(j, policy)?.kernel();
    if raw.ncols() != reference.ncols() {
        return Err(Error::FrameMismatch {
            kernel: raw.ncols(),
            frame: reference.ncols(),
        });
    }
    procrustes_align(&raw, reference)
}

/// `N x U` frame with ones on the leading diagonal, i.e. aligned with the
/// first `U` coordinates (the original control axes).
pub fn axis_aligned_frame(n: usize, u: usize) -> Matrix {
    Matrix::from_fn(n, u, |r, c| if r == c { 1.0 } else { 0.0 })
}

/// Largest deviation of `m^T m` from the identity.
pub fn orthonormality_error(m: &Matrix) -> f64 {
    let gram = m.transpose() * m;
    let eye = Matrix::identity(m.ncols(), m.ncols());
    (gram - eye).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn policy() -> RankPolicy {
        RankPolicy::default()
    }

    #[test]
    fn checked_svd_recovers_from_bad_iteration() {
        // plain nalgebra SVD of this matrix recomposes with error ~6e-3
        let m = Matrix::from_column_slice(
            3,
            3,
            &[
                0.7430491678897272,
                0.339440090891969,
                -0.4184189764002626,
                -0.14711214159482952,
                -0.742667907577555,
                -0.32734435202546286,
                0.22116292224654088,
                -0.3412122406221175,
                -0.5651074123139423,
            ],
        );
        let (u, s, v_t) = checked_svd(&m).unwrap();
        assert!((&u * Matrix::from_diagonal(&s) * &v_t - &m).amax() < 1e-13);
        assert!(s.iter().all(|x| *x <= 1.0 + 1e-12));
    }

    #[test]
    fn jacobi_svd_matches_definition() {
        let m = Matrix::from_row_slice(4, 3, &[
            1.0, 2.0, 0.0, 0.0, 1.0, -1.0, 3.0, 0.5, 0.2, 1.0, 2.0, 0.0,
        ]);
        let (u, s, v_t) = jacobi_svd(&m).unwrap();
        assert!((&u * Matrix::from_diagonal(&s) * &v_t - &m).amax() < 1e-14);
        assert!(orthonormality_error(&u) < 1e-14);
        assert!(orthonormality_error(&v_t.transpose()) < 1e-14);
        // rank-deficient input still yields an orthonormal U
        let r = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 0.0, 0.0]);
        let (u, s, v_t) = jacobi_svd(&r).unwrap();
        assert!((&u * Matrix::from_diagonal(&s) * &v_t - &r).amax() < 1e-14);
        assert!(orthonormality_error(&u) < 1e-14);
    }

    #[test]
    fn rank_policy_bounds() {
        assert!(RankPolicy::new(0.0).is_err());
        assert!(RankPolicy::new(1.0).is_err());
        assert!(RankPolicy::new(1e-8).is_ok());
    }

    #[test]
    fn pinv_identity() {
        let eye = Matrix::identity(3, 3);
        let p = pseudoinverse(&eye, policy()).unwrap();
        assert_relative_eq!(p, eye, epsilon = 1e-14);
    }

    #[test]
    fn pinv_row_vector() {
        let m = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let p = pseudoinverse(&m, policy()).unwrap();
        assert_eq!(p.shape(), (2, 1));
        assert_relative_eq!(p[(0, 0)], 0.5, epsilon = 1e-14);
        assert_relative_eq!(p[(1, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn pinv_zero_matrix() {
        let m = Matrix::zeros(2, 3);
        let p = pseudoinverse(&m, policy()).unwrap();
        assert_eq!(p.shape(), (3, 2));
        assert_eq!(p.amax(), 0.0);
    }

    #[test]
    fn pinv_rejects_non_finite() {
        let m = Matrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert_eq!(pseudoinverse(&m, policy()), Err(Error::InvalidMatrix));
    }

    #[test]
    fn kernel_of_axis_row() {
        let j = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let b = nullspace_basis(&j, policy()).unwrap();
        assert_relative_eq!(b[(0, 0)].abs(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(b[(1, 0)].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn kernel_empty_for_full_column_rank() {
        let j = Matrix::identity(2, 2);
        assert_eq!(
            nullspace_basis(&j, policy()),
            Err(Error::EmptyKernel { rank: 2 })
        );
    }

    #[test]
    fn kernel_of_tall_rank_deficient() {
        let j = Matrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, -1.0, -1.0]);
        let b = nullspace_basis(&j, policy()).unwrap();
        assert_eq!(b.ncols(), 1);
        assert!((&j * &b).amax() < 1e-14);
    }

    #[test]
    fn smooth_basis_reproduces_reference_when_aligned() {
        // kernel of [0 0 1] is spanned by e1, e2
        let j = Matrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
        let t = axis_aligned_frame(3, 2);
        let b = smooth_basis(&j, &t, policy()).unwrap();
        assert_relative_eq!(b, t, epsilon = 1e-14);
    }

    #[test]
    fn smooth_basis_frame_mismatch() {
        let j = Matrix::from_row_slice(1, 3, &[1.0, 0.0, 1.0]);
        let t = axis_aligned_frame(3, 1);
        assert_eq!(
            smooth_basis(&j, &t, policy()),
            Err(Error::FrameMismatch { kernel: 2, frame: 1 })
        );
    }

    #[test]
    fn axis_frame_is_orthonormal() {
        assert_eq!(orthonormality_error(&axis_aligned_frame(7, 2)), 0.0);
    }
}
