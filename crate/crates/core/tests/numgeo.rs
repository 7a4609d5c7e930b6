use std::f64::consts::PI;

use atacom::numgeo::{
    axis_aligned_frame, nullspace_basis, orthonormality_error, procrustes_align, pseudoinverse,
    smooth_basis, Factorization, Matrix, RankPolicy, Vector,
};
use atacom::Error;
use nalgebra::dvector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn policy() -> RankPolicy {
    RankPolicy::default()
}

/// `rows x cols` matrix of rank at most `rank`, entries of order one.
fn low_rank(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> Matrix {
    let a = Matrix::from_fn(rows, rank, |_, _| rng.random_range(-1.0..1.0));
    let b = Matrix::from_fn(rank, cols, |_, _| rng.random_range(-1.0..1.0));
    a * b
}

fn matrix_strategy() -> impl Strategy<Value = Matrix> {
    (2usize..=8)
        .prop_flat_map(|n| (1..n, Just(n)))
        .prop_flat_map(|(k, n)| {
            proptest::collection::vec(-1.0f64..1.0, k * n)
                .prop_map(move |v| Matrix::from_row_slice(k, n, &v))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn kernel_basis_is_orthonormal_and_annihilated(j in matrix_strategy()) {
        let b = nullspace_basis(&j, policy()).unwrap();
        prop_assert!((&j * &b).amax() <= 1e-10);
        prop_assert!(orthonormality_error(&b) <= 1e-10);
        prop_assert_eq!(b.ncols(), j.ncols() - j.nrows());
    }

    #[test]
    fn moore_penrose_identities(j in matrix_strategy(), transpose in any::<bool>()) {
        let m = if transpose { j.transpose() } else { j };
        let p = pseudoinverse(&m, policy()).unwrap();
        let scale = 1.0 + m.amax() * p.amax();
        prop_assert!((&m * &p * &m - &m).amax() <= 1e-10 * scale * m.amax().max(1.0));
        prop_assert!((&p * &m * &p - &p).amax() <= 1e-10 * scale * p.amax().max(1.0));
        let mp = &m * &p;
        let pm = &p * &m;
        prop_assert!((&mp - mp.transpose()).amax() <= 1e-10 * scale);
        prop_assert!((&pm - pm.transpose()).amax() <= 1e-10 * scale);
    }

    #[test]
    fn smooth_basis_ignores_raw_basis_choice(j in matrix_strategy(), seed in any::<u64>()) {
        let n = j.ncols();
        let u = n - j.nrows();
        let t = axis_aligned_frame(n, u);
        let raw = Factorization::new(&j, policy()).unwrap().kernel();
        // BᵀT must be nonsingular for the alignment to be unique
        let cross = raw.transpose() * &t;
        prop_assume!(cross.singular_values().min() > 1e-3);
        let a = procrustes_align(&raw, &t).unwrap();
        // another orthonormal basis of the same kernel: random rotation,
        // sign flips and a column permutation
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Matrix::from_fn(u, u, |_, _| rng.random_range(-1.0..1.0));
        let q = g.qr().q();
        let mut other = &raw * q;
        other.swap_columns(0, u - 1);
        if rng.random_bool(0.5) {
            other.column_mut(0).neg_mut();
        }
        let b = procrustes_align(&other, &t).unwrap();
        prop_assert!((&a - &b).amax() <= 1e-9);
        prop_assert!((&j * &a).amax() <= 1e-10);
    }
}

#[test]
fn pinv_transpose_kernel_property_over_random_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut premise_hits = 0;
    let mut counterexamples = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=n);
        let rank = rng.random_range(0..=m);
        let x_mat = low_rank(&mut rng, m, n, rank);
        let p = pseudoinverse_or_zero(&x_mat);
        // half of the vectors are drawn from the left kernel, where the
        // premise holds
        let mut x = Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        if rng.random_bool(0.5) && rank < m {
            let left = Factorization::new(&x_mat.transpose(), policy())
                .unwrap()
                .kernel();
            if left.ncols() > 0 {
                let w = Vector::from_fn(left.ncols(), |_, _| rng.random_range(-1.0..1.0));
                x = left * w;
            }
        }
        let quad = x.dot(&(&x_mat * (&p * &x)));
        if quad.abs() <= 1e-12 * x.norm_squared() {
            premise_hits += 1;
            let lhs = (x_mat.transpose() * &x).norm();
            if lhs > 1e-8 * x_mat.norm() * x.norm() {
                counterexamples += 1;
            }
        }
    }
    assert_eq!(counterexamples, 0);
    assert!(premise_hits > 100, "only {premise_hits} premise hits");
}

fn pseudoinverse_or_zero(m: &Matrix) -> Matrix {
    if m.amax() == 0.0 {
        return Matrix::zeros(m.ncols(), m.nrows());
    }
    pseudoinverse(m, policy()).unwrap()
}

#[test]
fn pseudoinverse_of_row_vector_by_hand() {
    let j = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let p = pseudoinverse(&j, policy()).unwrap();
    // hand oracle: J⁺ = Jᵀ (J Jᵀ)⁻¹ = [1, 1]ᵀ / 2
    assert!((p - Matrix::from_column_slice(2, 1, &[0.5, 0.5])).amax() < 1e-15);
    assert_eq!(
        pseudoinverse(&Matrix::identity(3, 3), policy()).unwrap(),
        Matrix::identity(3, 3)
    );
    assert_eq!(
        pseudoinverse(&Matrix::zeros(2, 3), policy()).unwrap(),
        Matrix::zeros(3, 2)
    );
}

#[test]
fn non_finite_input_is_rejected() {
    let j = Matrix::from_row_slice(1, 2, &[f64::NAN, 1.0]);
    assert!(matches!(pseudoinverse(&j, policy()), Err(Error::InvalidMatrix)));
    assert!(matches!(nullspace_basis(&j, policy()), Err(Error::InvalidMatrix)));
}

#[test]
fn full_rank_square_has_empty_kernel() {
    let err = nullspace_basis(&Matrix::identity(2, 2), policy()).unwrap_err();
    assert!(matches!(err, Error::EmptyKernel { rank: 2 }));
}

#[test]
fn kernel_of_one_one_up_to_sign() {
    let b = nullspace_basis(&Matrix::from_row_slice(1, 2, &[1.0, 1.0]), policy()).unwrap();
    let expected = dvector![1.0, -1.0] / 2f64.sqrt();
    let col = b.column(0).into_owned();
    let err = (&col - &expected).amax().min((&col + &expected).amax());
    assert!(err <= 1e-12, "{col}");
}

#[test]
fn kernel_of_axis_row() {
    let b = nullspace_basis(&Matrix::from_row_slice(1, 2, &[1.0, 0.0]), policy()).unwrap();
    assert!((b[(0, 0)]).abs() < 1e-15);
    assert!((b[(1, 0)].abs() - 1.0).abs() < 1e-15);
}

#[test]
fn smooth_basis_fixes_sign_for_both_raw_choices() {
    let j = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let t = axis_aligned_frame(2, 1);
    let expected = Matrix::from_column_slice(2, 1, &[1.0, -1.0]) / 2f64.sqrt();
    for sign in [1.0, -1.0] {
        let raw = &expected * sign;
        let aligned = procrustes_align(&raw, &t).unwrap();
        assert!((&aligned - &expected).amax() < 1e-15);
    }
    let b = smooth_basis(&j, &t, policy()).unwrap();
    assert!((&b - &expected).amax() < 1e-15);
}

#[test]
fn smooth_basis_fixed_point() {
    let j = Matrix::from_row_slice(1, 3, &[0.0, 0.0, 2.0]);
    let t = axis_aligned_frame(3, 2);
    let b = smooth_basis(&j, &t, policy()).unwrap();
    assert!((&b - &t).amax() < 1e-14);
}

#[test]
fn smooth_basis_rejects_wrong_frame_width() {
    let j = Matrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
    let t = axis_aligned_frame(3, 1);
    assert!(matches!(
        smooth_basis(&j, &t, policy()),
        Err(Error::FrameMismatch { kernel: 2, frame: 1 })
    ));
}

#[test]
fn slack_row_closed_form_basis() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = axis_aligned_frame(2, 1);
    for _ in 0..100 {
        let alpha: f64 = rng.random_range(1e-3..20.0);
        let j = Matrix::from_row_slice(1, 2, &[1.0, alpha]);
        let b = smooth_basis(&j, &t, policy()).unwrap();
        let norm = (1.0 + alpha * alpha).sqrt();
        let expected = dvector![-alpha / norm, 1.0 / norm];
        let col = b.column(0).into_owned();
        let err = (&col - &expected).amax().min((&col + &expected).amax());
        assert!(err <= 1e-10, "alpha = {alpha}: {b}");
    }
}

/// Kernel of `[J_k, alpha]` for a scalar constraint in the plane.
fn slack_row(jk: [f64; 2], alpha: f64) -> Matrix {
    Matrix::from_row_slice(1, 3, &[jk[0], jk[1], alpha])
}

fn frame_changes(rows: impl Iterator<Item = Matrix>) -> (f64, f64) {
    let t = axis_aligned_frame(3, 2);
    let mut prev: Option<(Matrix, Matrix)> = None;
    let (mut smooth_max, mut raw_max) = (0.0f64, 0.0f64);
    for j in rows {
        let smooth = smooth_basis(&j, &t, policy()).unwrap();
        let raw = Factorization::new(&j, policy()).unwrap().kernel();
        if let Some((ps, pr)) = &prev {
            smooth_max = smooth_max.max((&smooth - ps).norm());
            raw_max = raw_max.max((&raw - pr).norm());
        }
        prev = Some((smooth, raw));
    }
    (smooth_max, raw_max)
}

#[test]
fn circle_sweep_smooth_frame_is_continuous() {
    let steps = 10_000;
    let delta = 2.0 * PI / steps as f64;
    for radius in [1.2, 2.0] {
        let rows = (0..=steps).map(|i| {
            let th = i as f64 * delta;
            let s = [radius * th.cos(), radius * th.sin()];
            // k = 1 - |s|^2, on-manifold slack mu = -k, linear alpha = mu
            let mu = radius * radius - 1.0;
            slack_row([-2.0 * s[0], -2.0 * s[1]], mu)
        });
        let (smooth, raw) = frame_changes(rows);
        assert!(smooth <= 10.0 * delta, "smooth change {smooth}");
        assert!(raw >= 1.0, "raw change {raw}");
    }
}
