//! Invariants checked on randomly drawn inputs.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skill_critic::env::{
    generate_demonstrations, generate_layout, make_downstream_maze, maze_step, replay_trajectory, PlannerConfig,
};
use skill_critic::harness::{aggregate, MetricsSeries, RunConfig};
use skill_critic::hrl::{log_alpha_update, Mode, ReplayBuffer, LOG_ALPHA_RANGE};
use skill_critic::numgrad::{check_case, gaussian_kl, DiagGaussian, GradCheckCase};
use skill_critic::oracle::{run_verification, SuiteConfig};

fn gaussian(dim: usize) -> impl Strategy<Value = DiagGaussian> {
    (prop::collection::vec(-3.0f64..3.0, dim), prop::collection::vec(-2.0f64..1.5, dim))
        .prop_map(|(m, l)| DiagGaussian::new(m, l).unwrap())
}

fn gaussian_pair() -> impl Strategy<Value = (DiagGaussian, DiagGaussian)> {
    (1usize..12).prop_flat_map(|d| (gaussian(d), gaussian(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kl_is_nonnegative_and_zero_on_the_diagonal((p, q) in gaussian_pair()) {
        prop_assert!(gaussian_kl(&p, &q).unwrap() >= 0.0);
        prop_assert_eq!(gaussian_kl(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_adds_over_independent_blocks((p1, q1) in gaussian_pair(), (p2, q2) in gaussian_pair()) {
        let cat = |a: &DiagGaussian, b: &DiagGaussian| {
            DiagGaussian::new([&a.mean[..], &b.mean[..]].concat(), [&a.log_std[..], &b.log_std[..]].concat()).unwrap()
        };
        let joint = gaussian_kl(&cat(&p1, &p2), &cat(&q1, &q2)).unwrap();
        let parts = gaussian_kl(&p1, &q1).unwrap() + gaussian_kl(&p2, &q2).unwrap();
        prop_assert!((joint - parts).abs() <= 1e-12 * parts.max(1.0));
    }

    #[test]
    fn kl_ignores_a_common_shift((p, q) in gaussian_pair(), shift in -5.0f64..5.0) {
        let moved = |g: &DiagGaussian| DiagGaussian::new(g.mean.iter().map(|m| m + shift).collect(), g.log_std.clone()).unwrap();
        let a = gaussian_kl(&p, &q).unwrap();
        let b = gaussian_kl(&moved(&p), &moved(&q)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn temperature_step_moves_toward_the_target(log_alpha in -10.0f64..5.0, measured in 0.0f64..200.0, delta in 0.1f64..100.0, rate in 1e-5f64..1e-1) {
        let next = log_alpha_update(log_alpha, measured, delta, rate);
        prop_assert!((LOG_ALPHA_RANGE.0..=LOG_ALPHA_RANGE.1).contains(&next));
        let inside = (LOG_ALPHA_RANGE.0..=LOG_ALPHA_RANGE.1).contains(&log_alpha);
        if inside && measured > delta {
            prop_assert!(next >= log_alpha);
        }
        if inside && measured < delta {
            prop_assert!(next <= log_alpha);
        }
    }

    #[test]
    fn replay_buffer_keeps_the_latest_items(capacity in 1usize..50, n in 0usize..200) {
        let mut b = ReplayBuffer::new(capacity);
        for i in 0..n {
            b.push(i);
        }
        prop_assert_eq!(b.len(), n.min(capacity));
        prop_assert_eq!(b.pushed(), n as u64);
        let mut held: Vec<usize> = (0..b.len()).map(|i| *b.get(i)).collect();
        held.sort_unstable();
        prop_assert_eq!(held, (n.saturating_sub(capacity)..n).collect::<Vec<_>>());
    }

    #[test]
    fn export_statistics_do_not_depend_on_seed_order(rewards in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 2..6), rot in 0usize..6) {
        let series: Vec<MetricsSeries> = rewards
            .iter()
            .map(|r| MetricsSeries {
                source: "mem".into(),
                experiment: "e".into(),
                env_steps: vec![10, 20, 30],
                episode_reward: r.clone(),
                eval_reward: r.clone(),
            })
            .collect();
        let mut turned = series.clone();
        turned.rotate_left(rot % series.len());
        let (a, _) = aggregate(&series).unwrap();
        let (b, _) = aggregate(&turned).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            prop_assert!((x.episode_reward_mean - y.episode_reward_mean).abs() < 1e-9);
            prop_assert!((x.episode_reward_std - y.episode_reward_std).abs() < 1e-9);
            prop_assert!(x.episode_reward_std >= 0.0);
        }
    }

    #[test]
    fn config_text_round_trips(seed in any::<u64>(), mode in 0usize..5, delta in 0.5f64..200.0, env in 0usize..3) {
        let env = ["diagonal", "curvy_tunnel", "reach"][env];
        let cfg = RunConfig::from_assignments(&[
            ("train.mode", Mode::ALL[mode].name().to_string()),
            ("seed", seed.to_string()),
            ("env", env.to_string()),
            ("train.delta_a", delta.to_string()),
        ])
        .unwrap();
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(back.fingerprint(), cfg.fingerprint());
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_networks_pass_the_gradient_check(seed in any::<u64>()) {
        let case = GradCheckCase::random(&mut ChaCha8Rng::seed_from_u64(seed));
        let r = check_case(&case).unwrap();
        prop_assert!(r.max_rel_error <= 1e-4, "{:?}: {}", case, r.max_rel_error);
        prop_assert!(r.skipped * 10 <= r.checked.max(10));
    }

    #[test]
    fn random_layouts_keep_the_agent_out_of_walls(layout in any::<u64>(), actions in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..300)) {
        let spec = generate_layout(layout, &PlannerConfig::default()).unwrap();
        let mut s = spec.initial_state(spec.start);
        for (x, y) in actions {
            let step = maze_step(&spec, &s, [x, y]).unwrap();
            prop_assert!(spec.is_free_point(step.state.pos), "{:?} in a wall", step.state.pos);
            let moved = ((step.state.pos[0] - s.pos[0]).powi(2) + (step.state.pos[1] - s.pos[1]).powi(2)).sqrt();
            prop_assert!(moved <= spec.max_velocity * 2f64.sqrt() + 1e-12);
            s = step.state;
        }
    }

    #[test]
    fn downstream_mazes_keep_the_agent_out_of_walls(kind in 0usize..2, actions in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..300)) {
        let spec = make_downstream_maze(["diagonal", "curvy_tunnel"][kind]).unwrap();
        let mut s = spec.initial_state(spec.start);
        for (x, y) in actions {
            s = maze_step(&spec, &s, [x, y]).unwrap().state;
            prop_assert!(spec.is_free_point(s.pos));
        }
    }

    #[test]
    fn demonstrations_are_right_angled_and_replay_exactly(seed in any::<u64>()) {
        let cfg = PlannerConfig::default();
        let demos = generate_demonstrations(seed, 3, &cfg).unwrap();
        for (i, t) in demos.iter().enumerate() {
            prop_assert!(t.len() >= cfg.min_steps);
            prop_assert_eq!(t.states.len(), t.actions.len() + 1);
            for a in &t.actions {
                prop_assert!((a[0] == 0.0) != (a[1] == 0.0), "{:?}", a);
                prop_assert!(a[0].abs().max(a[1].abs()) <= cfg.speed);
            }
            let spec = generate_layout(t.layout_id, &cfg).unwrap();
            replay_trajectory(&spec, t, i).unwrap();
        }
    }

    #[test]
    fn oracle_identities_hold_for_any_suite_seed(seed in any::<u64>()) {
        let report = run_verification(&SuiteConfig { instances: 3, seed, ..SuiteConfig::default() }).unwrap();
        prop_assert!(report.passed(), "{}", report.render());
    }
}
