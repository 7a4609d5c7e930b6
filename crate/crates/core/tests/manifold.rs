use atacom::manifold::{
    assemble, constraint_residual, inequality_values, slack_reset, AugmentedState, BoxBounds,
    ConstraintSet, DiskKeepOut, DoubleIntegrator, FnConstraint, LinearConstraint,
    MovingDiskKeepOut, SingleIntegrator, SlackFamily, SlackModel, SphereEquality, Variant,
};
use atacom::numgeo::{axis_aligned_frame, Factorization, Matrix, RankPolicy, Vector};
use atacom::verify::{fd_jacobian_check, integrate_reference, FD_STEP, FD_TOLERANCE};
use nalgebra::dvector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BETAS: [f64; 4] = [0.3, 1.0, 3.0, 10.0];

fn families() -> [SlackFamily; 2] {
    [SlackFamily::Linear, SlackFamily::Exponential]
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

#[test]
fn analytic_jacobians_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let sine = FnConstraint::new(
        "sine",
        1,
        2,
        |x: &Vector| dvector![(4.0 * x[0]).cos() + x[1] * x[1] - 0.8],
        |x: &Vector| Matrix::from_row_slice(1, 2, &[-4.0 * (4.0 * x[0]).sin(), 2.0 * x[1]]),
    );
    for _ in 0..200 {
        let p = random_vec(&mut rng, 2, -2.0, 2.0);
        let disk = DiskKeepOut::new(random_vec(&mut rng, 2, -1.0, 1.0), 0.3);
        // keep away from the disk centre where the distance is not smooth
        if (&p - &disk.center).norm() < 0.05 {
            continue;
        }
        assert!(fd_jacobian_check(&disk, &p, FD_STEP) <= FD_TOLERANCE);
        let moving = MovingDiskKeepOut::new(2, 2, 0.2);
        let x = random_vec(&mut rng, 6, -1.0, 1.0);
        assert!(fd_jacobian_check(&moving, &x, FD_STEP) <= FD_TOLERANCE);
        let bounds = BoxBounds::new(dvector![-1.0, -1.0], dvector![1.0, 2.0]);
        assert!(fd_jacobian_check(&bounds, &p, FD_STEP) <= 1e-9);
        let sphere = SphereEquality {
            center: dvector![0.1, -0.2],
            radius: 1.0,
        };
        assert!(fd_jacobian_check(&sphere, &p, FD_STEP) <= FD_TOLERANCE);
        assert!(fd_jacobian_check(&sine, &p, FD_STEP) <= FD_TOLERANCE);
    }
    let lin = LinearConstraint::new(Matrix::from_row_slice(1, 1, &[1.0]), dvector![0.0]);
    // differences of a linear map are exact for a dyadic step; with h = 1e-6
    // rounding alone is of order 1e-10
    assert!(fd_jacobian_check(&lin, &dvector![0.4], 0.0625) <= 1e-12);
}

#[test]
fn wrong_jacobian_is_flagged() {
    let doubled = FnConstraint::new(
        "bad",
        1,
        1,
        |x: &Vector| dvector![x[0]],
        |_: &Vector| Matrix::from_row_slice(1, 1, &[2.0]),
    );
    let err = fd_jacobian_check(&doubled, &dvector![0.3], FD_STEP);
    assert!((err - 1.0 / 3.0).abs() < 1e-6 && err > FD_TOLERANCE);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn alpha_is_class_k_and_lipschitz(
        exponential in any::<bool>(),
        beta in 0.05f64..10.0,
        a in 0.0f64..2.0,
        b in 0.0f64..2.0,
    ) {
        let family = if exponential { SlackFamily::Exponential } else { SlackFamily::Linear };
        let m = SlackModel::new(family, beta, SlackModel::DEFAULT_TOL).unwrap();
        prop_assert_eq!(m.alpha(0.0).unwrap(), 0.0);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (alo, ahi) = (m.alpha(lo).unwrap(), m.alpha(hi).unwrap());
        prop_assert!(alo <= ahi);
        if lo < hi {
            prop_assert!(alo < ahi);
        }
        let l = m.lipschitz_on(2.0);
        prop_assert!(ahi - alo <= l * (hi - lo) * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn reset_puts_inactive_rows_on_manifold(k in proptest::collection::vec(-2.0f64..2.0, 1..6)) {
        let m = SlackModel::exponential(1.0).unwrap();
        let k = Vector::from_vec(k);
        let mu = slack_reset(&m, &k);
        for i in 0..k.len() {
            prop_assert!(mu[i] >= m.tol);
            if k[i] < -m.tol {
                prop_assert_eq!(k[i] + mu[i], 0.0);
            }
        }
    }
}

/// Integrates `mu_dot = alpha(mu) u` with the reference integrator.
fn slack_trajectory(m: &SlackModel, mu0: f64, u: f64, duration: f64) -> (Vec<f64>, Vec<f64>) {
    let model = m.clone();
    let traj = integrate_reference(
        move |_, x: &Vector| Ok(dvector![model.alpha(x[0].max(0.0))? * u]),
        &dvector![mu0],
        duration,
        1e-4,
        0.01,
    )
    .unwrap();
    (traj.times, traj.states.iter().map(|s| s[0]).collect())
}

#[test]
fn slack_decay_matches_closed_form_and_stays_above_bound() {
    let (mu0, u_min) = (0.5, -1.0);
    for family in families() {
        for beta in BETAS {
            let m = SlackModel::new(family, beta, SlackModel::DEFAULT_TOL).unwrap();
            let (times, mus) = slack_trajectory(&m, mu0, u_min, 10.0);
            let l = m.lipschitz_on(mu0);
            for (&t, &mu) in times.iter().zip(&mus) {
                // independent closed forms of the scalar ODE
                let oracle = match family {
                    SlackFamily::Linear => mu0 * (beta * u_min * t).exp(),
                    SlackFamily::Exponential => {
                        let a = 1.0 - (-beta * mu0).exp();
                        -(1.0 - a * (beta * u_min * t).exp()).ln() / beta
                    }
                };
                assert!(
                    (mu - oracle).abs() <= 1e-9 + 1e-6 * oracle,
                    "{family:?} beta {beta} t {t}: {mu} vs {oracle}"
                );
                let bound = mu0 * (l * u_min * t).exp();
                assert!(mu >= bound - 1e-6, "{family:?} beta {beta} t {t}");
                assert!(mu > 0.0);
            }
        }
    }
}

#[test]
fn residual_vanishes_after_reset() {
    let set = ConstraintSet::new()
        .with(DiskKeepOut::new(dvector![0.5, 0.5], 0.15))
        .with(BoxBounds::new(dvector![0.0, 0.0], dvector![1.0, 1.0]));
    let m = SlackModel::exponential(4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let s = random_vec(&mut rng, 2, 0.0, 1.0);
        let k = set.eval_inequality(&s).unwrap();
        if k.max() > -1e-3 {
            continue;
        }
        let mu = slack_reset(&m, &k);
        assert!(constraint_residual(&set, &mu, &s).unwrap().amax() < 1e-15);
    }
}

fn assemble_first_order(set: &ConstraintSet, s: &Vector, mu: &Vector) -> atacom::manifold::AugmentedAssembly {
    let sys = SingleIntegrator::unbounded(s.len());
    let frame = axis_aligned_frame(s.len() + mu.len(), s.len());
    assemble(
        Variant::FirstOrder,
        &sys,
        set,
        &SlackModel::exponential(2.0).unwrap(),
        &AugmentedState::new(s.clone(), mu.clone()),
        None,
        &frame,
        RankPolicy::default(),
    )
    .unwrap()
}

#[test]
fn second_order_at_rest_matches_first_order() {
    let set = ConstraintSet::new().with(DiskKeepOut::new(dvector![0.0, 0.0], 0.5));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let slack = SlackModel::exponential(2.0).unwrap();
    let frame = axis_aligned_frame(3, 2);
    for _ in 0..50 {
        let s = random_vec(&mut rng, 2, 0.6, 2.0);
        let mu = dvector![rng.random_range(0.01..1.0)];
        let first = assemble_first_order(&set, &s, &mu);
        let v = Vector::zeros(2);
        let di = DoubleIntegrator::new(2, f64::INFINITY);
        let second = assemble(
            Variant::SecondOrder { zeta_gain: 1.0 },
            &di,
            &set,
            &slack,
            &AugmentedState::new(s.clone(), mu.clone()).with_velocity(v.clone()),
            None,
            &frame,
            RankPolicy::default(),
        )
        .unwrap();
        assert!((&first.j_u - &second.j_u).amax() < 1e-14);
        assert!((&first.c - &second.c).amax() < 1e-14);
        assert!((&first.psi - &second.psi).amax() < 1e-14);
        let k = inequality_values(Variant::SecondOrder { zeta_gain: 1.0 }, &set, &s, None, Some(&v))
            .unwrap();
        assert!((k - set.eval_inequality(&s).unwrap()).amax() < 1e-15);
    }
}

#[test]
fn separable_with_static_obstacle_matches_first_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let moving = ConstraintSet::new().with(MovingDiskKeepOut::new(2, 1, 0.3));
    let slack = SlackModel::exponential(2.0).unwrap();
    let frame = axis_aligned_frame(3, 2);
    let sys = SingleIntegrator::unbounded(2);
    for _ in 0..50 {
        let z = random_vec(&mut rng, 2, -1.0, 1.0);
        let s = &z + random_vec(&mut rng, 2, 0.4, 1.0);
        let mu = dvector![rng.random_range(0.01..1.0)];
        let fixed = ConstraintSet::new().with(DiskKeepOut::new(z.clone(), 0.3));
        let first = assemble_first_order(&fixed, &s, &mu);
        let sep = assemble(
            Variant::Separable,
            &sys,
            &moving,
            &slack,
            &AugmentedState::new(s.clone(), mu.clone()).with_z(z.clone()),
            Some(&Vector::zeros(2)),
            &frame,
            RankPolicy::default(),
        )
        .unwrap();
        assert!((&first.j_u - &sep.j_u).amax() < 1e-14);
        assert!((&first.c - &sep.c).amax() < 1e-14);
        assert!(sep.psi.amax() < 1e-14);
        // a moving obstacle adds J_z z_dot to the drift
        let z_dot = dvector![0.2, -0.1];
        let moving_sep = assemble(
            Variant::Separable,
            &sys,
            &moving,
            &slack,
            &AugmentedState::new(s.clone(), mu.clone()).with_z(z.clone()),
            Some(&z_dot),
            &frame,
            RankPolicy::default(),
        )
        .unwrap();
        let d = &s - &z;
        let expected = d.dot(&z_dot) / d.norm();
        assert!((moving_sep.psi[0] - expected).abs() < 1e-12);
    }
}

#[test]
fn augmented_jacobian_has_full_row_rank_with_positive_slack() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let set = ConstraintSet::new()
        .with(DiskKeepOut::new(dvector![0.5, 0.5], 0.15))
        .with(BoxBounds::new(dvector![0.0, 0.0], dvector![1.0, 1.0]));
    for _ in 0..200 {
        let s = random_vec(&mut rng, 2, 0.0, 1.0);
        let mu = random_vec(&mut rng, 5, 1e-6, 1.0);
        let a = assemble_first_order(&set, &s, &mu);
        let rank = Factorization::new(&a.j_u, RankPolicy::default()).unwrap().rank();
        assert_eq!(rank, a.rows());
        assert_eq!(a.b_u.ncols(), 2);
        assert!((&a.j_u * &a.b_u).amax() < 1e-10);
    }
}
