//! The acceptance battery. Each criterion returns pass/fail plus the numbers
//! behind the verdict; the `verify` subcommand and the acceptance test target
//! both run these functions.

use std::f64::consts::TAU;

use atacom::controller::{AtacomController, ControllerConfig};
use atacom::envs::crossing::heading_recovery;
use atacom::envs::{
    CircleTrack, CircleTrackConfig, CrossingConfig, Environment, ObstacleMotion, Policy,
    ScriptedConstant, UniformRandom, VIOLATION_THRESHOLD,
};
use atacom::manifold::{
    ConstraintSet, DiskKeepOut, LinearConstraint, SingleIntegrator, SlackFamily, SlackModel,
    Variant,
};
use atacom::numgeo::{
    axis_aligned_frame, nullspace_basis, pseudoinverse, smooth_basis, Factorization, Matrix,
    RankPolicy, Vector,
};
use atacom::verify::{integrate_reference, iss_bound_check, lyapunov_value, ClosedLoop};
use nalgebra::dvector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use toml::Value;

use crate::config::{EnvId, ExperimentConfig, PolicyId, SweepAxis};
use crate::runner::run_experiment;
use crate::sweep::sweep;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("{verdict} [{:2}] {}: {}", self.id, self.name, self.detail)
    }
}

type Check = fn() -> (bool, String);

pub const CRITERIA: [(&str, Check); 12] = [
    ("zero-violation safety", zero_violation_safety),
    ("conservatism ordering", conservatism_ordering),
    ("observer ordering", observer_ordering),
    ("tangent basis reproduction", tangent_basis),
    ("smooth frame continuity", smooth_frame_continuity),
    ("contraction rate", contraction_rate),
    ("pseudoinverse-transpose kernel property", pinv_transpose_property),
    ("slack positivity bound", slack_positivity),
    ("input-to-state bound", iss_bound),
    ("second-order and equality extensions", extensions),
    ("drift clipping recovery", drift_clipping_recovery),
    ("determinism", determinism),
];

/// Runs criterion `id` (1-based).
pub fn run_criterion(id: usize) -> Option<CriterionResult> {
    let (name, check) = CRITERIA.get(id.checked_sub(1)?)?;
    let (passed, detail) = check();
    Some(CriterionResult {
        id,
        name,
        passed,
        detail,
    })
}

pub fn run_all() -> Vec<CriterionResult> {
    (1..=CRITERIA.len()).filter_map(run_criterion).collect()
}

const BETAS: [f64; 4] = [0.3, 1.0, 3.0, 10.0];

fn strings(v: &[&str]) -> Vec<Value> {
    v.iter().map(|s| Value::String(s.to_string())).collect()
}

fn floats(v: &[f64]) -> Vec<Value> {
    v.iter().copied().map(Value::Float).collect()
}

fn axis(field: &str, values: Vec<Value>) -> SweepAxis {
    SweepAxis {
        field: field.into(),
        values,
    }
}

fn static_template(episodes: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.env.id = EnvId::Static2d;
    c.episodes = episodes;
    c
}

fn zero_violation_safety() -> (bool, String) {
    let axes = [
        axis("slack.family", strings(&["linear", "exponential"])),
        axis("slack.beta", floats(&BETAS)),
        axis("policy.id", strings(&["attractor", "uniform-random"])),
    ];
    let cells = match sweep(&static_template(25), &axes) {
        Ok(c) => c,
        Err(e) => return (false, e.to_string()),
    };
    let worst = cells
        .iter()
        .map(|c| c.summary.max_violation)
        .fold(f64::NEG_INFINITY, f64::max);
    let faults: usize = cells.iter().map(|c| c.summary.faults).sum();
    let episodes: usize = cells.iter().map(|c| c.summary.episodes).sum();
    (
        worst <= VIOLATION_THRESHOLD && faults == 0,
        format!("{episodes} episodes in {} cells, max k = {worst:.3e}, faults {faults}", cells.len()),
    )
}

fn conservatism_ordering() -> (bool, String) {
    let axes = [
        axis("slack.family", strings(&["linear", "exponential"])),
        axis("slack.beta", floats(&BETAS)),
    ];
    let cells = match sweep(&static_template(25), &axes) {
        Ok(c) => c,
        Err(e) => return (false, e.to_string()),
    };
    let mut ranked: Vec<(&str, f64)> = cells
        .iter()
        .map(|c| (c.label.as_str(), c.summary.mean_return))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let lowest = "slack.family=linear,slack.beta=0.3";
    let top = "slack.family=exponential,slack.beta=10.0";
    let n = ranked.len();
    let lowest_ok = ranked[n - 1].0 == lowest && ranked[n - 1].1 < ranked[n - 2].1;
    let top_ok = ranked[..2].iter().any(|(l, _)| *l == top);
    let table = ranked
        .iter()
        .map(|(l, r)| format!("{}:{r:.3}", l.replace("slack.family=", "").replace(",slack.beta=", " ")))
        .collect::<Vec<_>>()
        .join(" > ");
    (lowest_ok && top_ok, format!("mean return {table}"))
}

fn observer_ordering() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for motion in [ObstacleMotion::Circle, ObstacleMotion::RandomWalk] {
        let mut t = ExperimentConfig::default();
        t.env.id = EnvId::Dynamic2d;
        t.episodes = 200;
        t.dynamic2d.motion = motion;
        let cells = match sweep(&t, &[axis("dynamic2d.observer", strings(&["exact", "fd", "none"]))]) {
            Ok(c) => c,
            Err(e) => return (false, e.to_string()),
        };
        let s: Vec<f64> = cells.iter().map(|c| c.summary.success_rate).collect();
        let (exact, fd, none) = (s[0], s[1], s[2]);
        // pairwise order within the +-0.03 resolution, end-to-end gap resolved
        let pass = exact >= 0.95
            && exact >= fd - 0.03
            && fd >= none - 0.03
            && exact - none > 0.03;
        ok &= pass;
        parts.push(format!("{motion:?}: exact {exact:.3} fd {fd:.3} none {none:.3}"));
    }
    (ok, parts.join("; "))
}

fn tangent_basis() -> (bool, String) {
    let policy = RankPolicy::default();
    let b = match nullspace_basis(&Matrix::from_row_slice(1, 2, &[1.0, 1.0]), policy) {
        Ok(b) => b.column(0).into_owned(),
        Err(e) => return (false, e.to_string()),
    };
    let expected = dvector![1.0, -1.0] / 2f64.sqrt();
    let err_11 = (&b - &expected).amax().min((&b + &expected).amax());
    let t = axis_aligned_frame(2, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let alpha: f64 = rng.random_range(1e-3..20.0);
        let Ok(b) = smooth_basis(&Matrix::from_row_slice(1, 2, &[1.0, alpha]), &t, policy) else {
            return (false, format!("smooth basis failed at alpha = {alpha}"));
        };
        let norm = (1.0 + alpha * alpha).sqrt();
        let e = dvector![-alpha / norm, 1.0 / norm];
        let col = b.column(0).into_owned();
        worst = worst.max((&col - &e).amax().min((&col + &e).amax()));
    }
    (
        err_11 <= 1e-12 && worst <= 1e-10,
        format!("[1 1] kernel error {err_11:.1e}, closed-form error {worst:.1e} over 100 alpha"),
    )
}

/// Largest adjacent change of the smooth and raw bases along a path, for a
/// scalar constraint with linear slack (`alpha = mu`, `mu = max(-k, 1e-6)`).
fn frame_changes(points: impl Iterator<Item = (f64, [f64; 2])>) -> (f64, f64) {
    let t = axis_aligned_frame(3, 2);
    let policy = RankPolicy::default();
    let mut prev: Option<(Matrix, Matrix)> = None;
    let (mut smooth_max, mut raw_max) = (0.0f64, 0.0f64);
    for (k, jk) in points {
        let mu = (-k).max(1e-6);
        let j = Matrix::from_row_slice(1, 3, &[jk[0], jk[1], mu]);
        let (Ok(smooth), Ok(f)) = (smooth_basis(&j, &t, policy), Factorization::new(&j, policy)) else {
            return (f64::INFINITY, 0.0);
        };
        let raw = f.kernel();
        if let Some((ps, pr)) = &prev {
            smooth_max = smooth_max.max((&smooth - ps).norm());
            raw_max = raw_max.max((&raw - pr).norm());
        }
        prev = Some((smooth, raw));
    }
    (smooth_max, raw_max)
}

fn smooth_frame_continuity() -> (bool, String) {
    let steps = 10_000;
    let delta = TAU / steps as f64;
    let mut smooth_worst: f64 = 0.0;
    for radius in [1.2, 2.0] {
        // k = 1 - |s|^2 on circles of constant radius
        let (smooth, _) = frame_changes((0..=steps).map(|i| {
            let th = i as f64 * delta;
            let s = [radius * th.cos(), radius * th.sin()];
            (1.0 - radius * radius, [-2.0 * s[0], -2.0 * s[1]])
        }));
        smooth_worst = smooth_worst.max(smooth);
    }
    // k = cos(4 s1) + s2^2 - 0.8 along the unit circle
    let (_, raw) = frame_changes((0..=steps).map(|i| {
        let th = i as f64 * delta;
        let s = [th.cos(), th.sin()];
        (
            (4.0 * s[0]).cos() + s[1] * s[1] - 0.8,
            [-4.0 * (4.0 * s[0]).sin(), 2.0 * s[1]],
        )
    }));
    (
        smooth_worst <= 10.0 * delta && raw >= 1.0,
        format!(
            "smooth max change {smooth_worst:.3e} (bound {:.3e}), raw max change {raw:.3}",
            10.0 * delta
        ),
    )
}

fn two_disks() -> ConstraintSet {
    ConstraintSet::new()
        .with(DiskKeepOut::new(dvector![0.0, 0.0], 0.5))
        .with(DiskKeepOut::new(dvector![1.5, 0.0], 0.3))
}

fn contraction_rate() -> (bool, String) {
    let set = two_disks();
    let sys = SingleIntegrator::unbounded(2);
    let lambda = 10.0;
    let dt = 0.01;
    let outcomes: Vec<Result<(f64, f64), String>> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // start away from both obstacles with positive slack, |c(0)| <= 0.5
            let (s, k) = loop {
                let s = dvector![rng.random_range(-1.5..3.0), rng.random_range(-1.5..1.5)];
                let k = set.eval_inequality(&s).map_err(|e| e.to_string())?;
                if k.max() < -0.05 {
                    break (s, k);
                }
            };
            let offset = loop {
                let d = dvector![rng.random_range(-0.35..0.35), rng.random_range(-0.35..0.35)];
                if d.norm() <= 0.5 && (-&k + &d).min() >= 0.05 && d.norm() > 1e-3 {
                    break d;
                }
            };
            let closed = ClosedLoop {
                variant: Variant::FirstOrder,
                system: &sys,
                constraints: &set,
                slack: SlackModel::exponential(2.0).unwrap(),
                config: ControllerConfig::default().with_lambda(lambda),
                action: Vector::zeros(2),
                disturbance: None,
            };
            let x0 = ClosedLoop::join(&s, &(-&k + offset));
            let traj = integrate_reference(|_, x| closed.rhs(x), &x0, 5.0 / lambda, 1e-4, dt)
                .map_err(|e| e.to_string())?;
            let c0 = closed.residual(&x0).map_err(|e| e.to_string())?.norm();
            let (mut rate_excess, mut v_rise) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            let mut v_prev = f64::INFINITY;
            for (t, x) in traj.times.iter().zip(&traj.states) {
                let c = closed.residual(x).map_err(|e| e.to_string())?;
                rate_excess = rate_excess.max(c.norm() - c0 * (-0.9 * lambda * t).exp());
                let v = lyapunov_value(&c);
                v_rise = v_rise.max(v - v_prev);
                v_prev = v;
            }
            Ok((rate_excess, v_rise))
        })
        .collect();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_rise = f64::NEG_INFINITY;
    for o in outcomes {
        match o {
            Ok((e, r)) => {
                worst_excess = worst_excess.max(e);
                worst_rise = worst_rise.max(r);
            }
            Err(e) => return (false, e),
        }
    }
    (
        worst_excess <= 1e-12 && worst_rise <= 1e-8,
        format!(
            "100 starts, lambda {lambda}: max(|c| - |c0|e^(-0.9 lambda t)) = {worst_excess:.2e}, max V increase {worst_rise:.2e}"
        ),
    )
}

fn pinv_transpose_property() -> (bool, String) {
    let policy = RankPolicy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut premise_hits, mut counterexamples) = (0, 0);
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=n);
        let rank = rng.random_range(0..=m);
        let a = Matrix::from_fn(m, rank, |_, _| rng.random_range(-1.0..1.0));
        let b = Matrix::from_fn(rank, n, |_, _| rng.random_range(-1.0..1.0));
        let x_mat = a * b;
        let p = if x_mat.amax() == 0.0 {
            Matrix::zeros(n, m)
        } else {
            match pseudoinverse(&x_mat, policy) {
                Ok(p) => p,
                Err(e) => return (false, e.to_string()),
            }
        };
        let mut x = Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        if rng.random_bool(0.5) && rank < m {
            if let Ok(f) = Factorization::new(&x_mat.transpose(), policy) {
                let left = f.kernel();
                if left.ncols() > 0 {
                    let w = Vector::from_fn(left.ncols(), |_, _| rng.random_range(-1.0..1.0));
                    x = left * w;
                }
            }
        }
        let quad = x.dot(&(&x_mat * (&p * &x)));
        if quad.abs() <= 1e-12 * x.norm_squared() {
            premise_hits += 1;
            if (x_mat.transpose() * &x).norm() > 1e-8 * x_mat.norm() * x.norm() {
                counterexamples += 1;
            }
        }
    }
    (
        counterexamples == 0 && premise_hits > 100,
        format!("1000 cases, {premise_hits} with x^T X X^+ x = 0, {counterexamples} counterexamples"),
    )
}

fn slack_positivity() -> (bool, String) {
    let (mu0, u_min, horizon) = (0.5, -1.0, 10.0);
    let mut worst = f64::INFINITY;
    for family in [SlackFamily::Linear, SlackFamily::Exponential] {
        for beta in BETAS {
            let m = SlackModel::new(family, beta, SlackModel::DEFAULT_TOL).unwrap();
            let f = |_: f64, x: &Vector| m.alpha(x[0].max(0.0)).map(|a| dvector![a * u_min]);
            let traj = match integrate_reference(f, &dvector![mu0], horizon, 1e-4, 0.01) {
                Ok(t) => t,
                Err(e) => return (false, e.to_string()),
            };
            let l = m.lipschitz_on(mu0);
            for (t, x) in traj.times.iter().zip(&traj.states) {
                worst = worst.min(x[0] - mu0 * (l * u_min * t).exp());
            }
        }
    }
    (
        worst >= -1e-6,
        format!("min over 8 cells of mu(t) - mu0 e^(L u t) = {worst:.2e}"),
    )
}

fn spectral_norm(m: &Matrix) -> f64 {
    Factorization::new(m, RankPolicy::default())
        .map(|f| f.singular_values().max())
        .unwrap_or(f64::INFINITY)
}

/// One disturbed closed-loop run; returns whether the bound held and the
/// post-transient sup norm.
fn iss_run(dim: usize, omega: f64, seed: u64) -> Result<(bool, f64), String> {
    let eta_c = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (set, eta_j_bound, s) = if dim == 1 {
        let set = ConstraintSet::new().with(LinearConstraint::new(
            Matrix::from_row_slice(1, 1, &[1.0]),
            dvector![0.0],
        ));
        (set, 1.0, dvector![rng.random_range(-2.0..-0.5)])
    } else {
        let set = two_disks();
        let s = loop {
            let s = dvector![rng.random_range(-1.5..3.0), rng.random_range(-1.5..1.5)];
            if set.eval_inequality(&s).map_err(|e| e.to_string())?.max() < -0.05 {
                break s;
            }
        };
        (set, 2f64.sqrt(), s)
    };
    let k = set.eval_inequality(&s).map_err(|e| e.to_string())?;
    let mu0 = k.map(|ki| (-ki + rng.random_range(-0.3..0.3)).max(0.05));
    let dir = if dim == 1 {
        dvector![if rng.random_bool(0.5) { 1.0 } else { -1.0 }]
    } else {
        let th: f64 = rng.random_range(0.0..TAU);
        dvector![th.cos(), th.sin()]
    };
    // the premise lambda >= eta_J omega / eta_c with the analytic bound on
    // |J_k| (unit-gradient rows)
    let lambda = eta_j_bound * omega / eta_c;
    let sys = SingleIntegrator::unbounded(dim);
    let closed = ClosedLoop {
        variant: Variant::FirstOrder,
        system: &sys,
        constraints: &set,
        slack: SlackModel::exponential(1.0).unwrap(),
        config: ControllerConfig::default().with_lambda(lambda),
        action: Vector::zeros(dim),
        disturbance: Some(dir * omega),
    };
    let duration = 5.0 / lambda + 10.0;
    let traj = integrate_reference(|_, x| closed.rhs(x), &ClosedLoop::join(&s, &mu0), duration, 1e-3, 0.01)
        .map_err(|e| e.to_string())?;
    let mut residuals = Vec::with_capacity(traj.states.len());
    let mut eta_j: f64 = 0.0;
    for x in &traj.states {
        residuals.push(closed.residual(x).map_err(|e| e.to_string())?);
        let (s, _) = closed.split(x);
        eta_j = eta_j.max(spectral_norm(&set.jacobian_inequality(&s).map_err(|e| e.to_string())?));
    }
    let verdict = iss_bound_check(&traj.times, &residuals, omega, lambda, eta_j, eta_c);
    let sup = match verdict {
        atacom::verify::IssVerdict::Holds { sup_norm } | atacom::verify::IssVerdict::Violated { sup_norm } => sup_norm,
        atacom::verify::IssVerdict::Inconclusive => f64::NAN,
    };
    Ok((verdict.holds(), sup))
}

fn iss_bound() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for dim in [1, 2] {
        for omega in [0.05, 0.1] {
            let runs: Vec<Result<(bool, f64), String>> =
                (0..50u64).into_par_iter().map(|seed| iss_run(dim, omega, seed)).collect();
            let mut held = 0;
            let mut sup: f64 = 0.0;
            for r in runs {
                match r {
                    Ok((h, s)) => {
                        held += h as usize;
                        sup = sup.max(s);
                    }
                    Err(e) => return (false, e),
                }
            }
            ok &= held == 50;
            parts.push(format!("{dim}D omega {omega}: {held}/50, sup |c| {sup:.4}"));
        }
    }
    (ok, parts.join("; "))
}

fn extensions() -> (bool, String) {
    // second order: zero violations over 25 seeds for both policies
    let mut t = ExperimentConfig::default();
    t.env.id = EnvId::DoubleIntegrator;
    t.episodes = 25;
    let cells = match sweep(&t, &[axis("policy.id", strings(&["attractor", "uniform-random"]))]) {
        Ok(c) => c,
        Err(e) => return (false, e.to_string()),
    };
    let di_viol: usize = cells.iter().map(|c| c.summary.violating_episodes).sum();
    let di_faults: usize = cells.iter().map(|c| c.summary.faults).sum();
    let di_max = cells
        .iter()
        .map(|c| c.summary.max_violation)
        .fold(f64::NEG_INFINITY, f64::max);

    // equality: |l(s)| over 10 s rollouts
    let results: Vec<Result<f64, String>> = (0..25u64)
        .into_par_iter()
        .flat_map(|seed| [(seed, false), (seed, true)])
        .map(|(seed, random)| {
            let mut env = CircleTrack::new(CircleTrackConfig::default()).map_err(|e| e.to_string())?;
            let ctl = AtacomController::new(
                Variant::Equality,
                SlackModel::exponential(4.0).unwrap(),
                ControllerConfig::default().with_lambda(20.0),
            )
            .map_err(|e| e.to_string())?;
            let mut policy: Box<dyn Policy> = if random {
                Box::new(UniformRandom::new(seed))
            } else {
                Box::new(ScriptedConstant { action: vec![1.0] })
            };
            let mut obs = env.reset(seed);
            policy.reset(seed);
            let mut worst: f64 = env.equality_residual().abs();
            for _ in 0..env.horizon() {
                let a = policy.act(&obs, 1);
                let out = ctl
                    .step(env.system(), env.constraints(), &env.plant_state(), &a)
                    .map_err(|e| e.to_string())?;
                let tr = env.step(&out.action.u_s).map_err(|e| e.to_string())?;
                worst = worst.max(env.equality_residual().abs());
                obs = tr.observation;
                if tr.done {
                    break;
                }
            }
            Ok(worst)
        })
        .collect();
    let mut l_max: f64 = 0.0;
    for r in results {
        match r {
            Ok(l) => l_max = l_max.max(l),
            Err(e) => return (false, e),
        }
    }
    (
        di_viol == 0 && di_faults == 0 && l_max <= 1e-3,
        format!(
            "double integrator: {di_viol} violating episodes, {di_faults} faults, max k {di_max:.3e}; \
             circle track: max |l| {l_max:.2e} over 50 rollouts"
        ),
    )
}

fn drift_clipping_recovery() -> (bool, String) {
    let config = CrossingConfig::default();
    let slack = CrossingConfig::default_slack();
    let ratios: Vec<Result<f64, String>> = (0..25u64)
        .into_par_iter()
        .map(|seed| {
            let on = heading_recovery(&config, &slack, &ControllerConfig::default(), seed, 5.0)
                .map_err(|e| e.to_string())?;
            let off = heading_recovery(
                &config,
                &slack,
                &ControllerConfig::default().with_drift_clipping(false),
                seed,
                5.0,
            )
            .map_err(|e| e.to_string())?;
            match (on.recovery_time, off.recovery_time) {
                (Some(a), Some(b)) if a > 0.0 => Ok(b / a),
                (Some(_), Some(_)) => Ok(f64::INFINITY),
                _ => Err(format!("seed {seed}: heading never recovered")),
            }
        })
        .collect();
    let mut min_ratio = f64::INFINITY;
    for r in ratios {
        match r {
            Ok(x) => min_ratio = min_ratio.min(x),
            Err(e) => return (false, e),
        }
    }
    (
        min_ratio >= 2.0,
        format!("min unclipped/clipped recovery time ratio over 25 seeds: {min_ratio:.2}"),
    )
}

fn determinism() -> (bool, String) {
    let mut cfg = ExperimentConfig::default();
    cfg.env.id = EnvId::Dynamic2d;
    cfg.episodes = 8;
    cfg.env.horizon = Some(300);
    cfg.dynamic2d.observer = atacom::envs::ObserverMode::Fd;
    cfg.dynamic2d.motion = ObstacleMotion::RandomWalk;
    cfg.policy.id = PolicyId::UniformRandom;
    let run = |threads| {
        crate::runner::with_threads(Some(threads), || run_experiment(&cfg, true))
            .and_then(|r| r)
            .map(|r| (r.summary.to_json(), r.episodes))
    };
    match (run(1), run(4), run(4)) {
        (Ok(a), Ok(b), Ok(c)) => (
            a == b && b == c,
            format!(
                "summary {} bytes, serial vs parallel identical: {}, repeat identical: {}",
                a.0.len(),
                a == b,
                b == c
            ),
        ),
        _ => (false, "run failed".into()),
    }
}
