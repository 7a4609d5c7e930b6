use atacom::controller::{AtacomController, ControllerConfig};
use atacom::envs::crossing::heading_recovery;
use atacom::envs::{
    run_episode, Attractor, CircleTrack, CircleTrackConfig, CrossingConfig, DoubleIntegratorConfig,
    DoubleIntegratorEnv, Dynamic2d, Dynamic2dConfig, Environment, ObstacleMotion, Policy,
    ScriptedConstant, Static2d, Static2dConfig, UniformRandom, VIOLATION_THRESHOLD,
};
use atacom::manifold::{SlackFamily, SlackModel, Variant};
use atacom::verify::singularity_check;

fn controller(variant: Variant, slack: SlackModel, lambda: f64) -> AtacomController {
    AtacomController::new(variant, slack, ControllerConfig::default().with_lambda(lambda)).unwrap()
}

fn shipped_envs() -> Vec<Box<dyn Environment>> {
    vec![
        Box::new(Static2d::new(Static2dConfig::default()).unwrap()),
        Box::new(
            Dynamic2d::new(Dynamic2dConfig {
                obstacles: 5,
                ..Default::default()
            })
            .unwrap(),
        ),
        Box::new(
            Dynamic2d::new(Dynamic2dConfig {
                obstacles: 5,
                motion: ObstacleMotion::RandomWalk,
                ..Default::default()
            })
            .unwrap(),
        ),
        Box::new(DoubleIntegratorEnv::new(DoubleIntegratorConfig::default()).unwrap()),
        Box::new(CircleTrack::new(CircleTrackConfig::default()).unwrap()),
    ]
}

#[test]
fn resets_are_safe_and_deterministic() {
    for mut env in shipped_envs() {
        for seed in 0..1000 {
            let first = env.reset(seed);
            let k = env.constraint_values();
            assert!(k.max() < 0.0, "{} seed {seed}: {k}", env.name());
            assert_eq!(first, env.reset(seed), "{} seed {seed}", env.name());
        }
    }
}

#[test]
fn identical_seeds_give_identical_episodes() {
    let ctl = controller(Variant::Separable, SlackModel::exponential(4.0).unwrap(), 10.0);
    let mut env = Dynamic2d::new(Dynamic2dConfig {
        observer: atacom::envs::ObserverMode::Fd,
        motion: ObstacleMotion::RandomWalk,
        ..Default::default()
    })
    .unwrap();
    let mut run = |seed| {
        let mut p = Attractor::isotropic(2, 10.0);
        run_episode(&mut env, &mut p, &ctl, seed, 0.99, true)
    };
    let a = run(4);
    let b = run(4);
    assert_eq!(a, b);
    assert_ne!(a.records, run(5).records);
}

#[test]
fn static_rollouts_stay_safe() {
    let mut env = Static2d::new(Static2dConfig::default()).unwrap();
    for family in [SlackFamily::Linear, SlackFamily::Exponential] {
        let ctl = controller(
            Variant::FirstOrder,
            SlackModel::new(family, 1.0, SlackModel::DEFAULT_TOL).unwrap(),
            10.0,
        );
        for seed in 0..5 {
            let policies: [Box<dyn Policy>; 2] = [
                Box::new(Attractor::isotropic(2, 10.0)),
                Box::new(UniformRandom::new(0)),
            ];
            for mut p in policies {
                let r = run_episode(&mut env, p.as_mut(), &ctl, seed, 0.99, true);
                assert!(r.fault.is_none());
                assert!(r.max_violation <= VIOLATION_THRESHOLD, "{}", r.max_violation);
                assert_eq!(r.records.len(), r.steps);
                assert!(r.records.windows(2).all(|w| w[0].t < w[1].t));
                for rec in &r.records {
                    if !rec.saturated {
                        assert!(rec.tangency_residual <= 1e-8);
                    }
                }
            }
        }
    }
}

#[test]
fn stiffer_slack_reaches_target_no_later() {
    let mut env = Static2d::new(Static2dConfig::default()).unwrap();
    let mut lengths = Vec::new();
    for beta in [0.3, 1.0, 3.0, 10.0] {
        let ctl = controller(Variant::FirstOrder, SlackModel::exponential(beta).unwrap(), 10.0);
        let total: usize = (0..10)
            .map(|seed| {
                let mut p = Attractor::isotropic(2, 10.0);
                run_episode(&mut env, &mut p, &ctl, seed, 0.99, false).steps
            })
            .sum();
        lengths.push(total);
    }
    assert!(lengths.windows(2).all(|w| w[1] <= w[0]), "{lengths:?}");
}

#[test]
fn attractor_rollouts_never_touch_the_singular_set() {
    let slack = SlackModel::exponential(4.0).unwrap();
    for mut env in shipped_envs() {
        let variant = env.variant();
        let lambda = if variant == Variant::Equality { 20.0 } else { 10.0 };
        let ctl = controller(variant, slack.clone(), lambda);
        let action_dim = ctl.action_dim(env.system(), env.constraints());
        for seed in 0..5 {
            let mut obs = env.reset(seed);
            let mut p = Attractor::isotropic(2, 10.0);
            for _ in 0..env.horizon() {
                let a = p.act(&obs, action_dim);
                let out = ctl
                    .step(env.system(), env.constraints(), &env.plant_state(), &a)
                    .unwrap();
                let asm = &out.assembly;
                assert!(!singularity_check(&asm.j_u, &asm.c, &out.mu, 1e-9), "{}", env.name());
                let tr = env.step(&out.action.u_s).unwrap();
                obs = tr.observation;
                if tr.done {
                    break;
                }
            }
        }
    }
}

#[test]
fn double_integrator_random_actions_stay_safe() {
    let mut env = DoubleIntegratorEnv::new(DoubleIntegratorConfig::default()).unwrap();
    let ctl = controller(
        Variant::SecondOrder { zeta_gain: 1.0 },
        SlackModel::exponential(4.0).unwrap(),
        10.0,
    );
    for seed in 0..5 {
        let mut p = UniformRandom::new(0);
        let r = run_episode(&mut env, &mut p, &ctl, seed, 0.99, false);
        assert!(r.fault.is_none());
        assert_eq!(r.violation_steps, 0);
    }
}

#[test]
fn circle_track_holds_the_equality() {
    let mut env = CircleTrack::new(CircleTrackConfig::default()).unwrap();
    let ctl = controller(Variant::Equality, SlackModel::exponential(4.0).unwrap(), 20.0);
    for seed in 0..5 {
        env.reset(seed);
        let mut p = ScriptedConstant { action: vec![1.0] };
        let mut worst: f64 = 0.0;
        let mut obs = env.observation();
        for _ in 0..env.horizon() {
            let a = p.act(&obs, 1);
            let out = ctl
                .step(env.system(), env.constraints(), &env.plant_state(), &a)
                .unwrap();
            let tr = env.step(&out.action.u_s).unwrap();
            worst = worst.max(env.equality_residual().abs());
            assert!(tr.info.max_violation <= VIOLATION_THRESHOLD);
            obs = tr.observation;
        }
        assert!(worst <= 1e-3, "seed {seed}: {worst}");
    }
}

#[test]
fn drift_clipping_shortens_heading_recovery() {
    let config = CrossingConfig::default();
    let slack = CrossingConfig::default_slack();
    for seed in 0..3 {
        let on = heading_recovery(&config, &slack, &ControllerConfig::default(), seed, 5.0).unwrap();
        let off = heading_recovery(
            &config,
            &slack,
            &ControllerConfig::default().with_drift_clipping(false),
            seed,
            5.0,
        )
        .unwrap();
        let (t_on, t_off) = (on.recovery_time.unwrap(), off.recovery_time.unwrap());
        assert!(t_off >= 2.0 * t_on, "seed {seed}: {t_on} vs {t_off}");
        assert!(on.max_violation <= 0.0 && off.max_violation <= 0.0);
    }
}
