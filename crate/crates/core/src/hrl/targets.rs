//! Scalar Bellman targets and the temperature step. Everything here is pure
//! so that the network updates and the tabular mirror share one definition.

use super::LOG_ALPHA_RANGE;
use crate::oracle::{Regularization, TabularSemiMDP, ValueTables};

/// `r` when `done`, else `r + discount · value`.
pub fn bootstrap(r: f64, discount: f64, done: bool, value: f64) -> f64 {
    if done {
        r
    } else {
        r + discount * value
    }
}

/// High-level target for one executed skill.
pub fn hl_target(reward_h: f64, gamma_z: f64, done: bool, q_next: f64, alpha_z: f64, kl_next: f64) -> f64 {
    bootstrap(reward_h, gamma_z, done, q_next - alpha_z * kl_next)
}

/// Successor value a low-level target bootstraps from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LlBranch {
    /// Next state starts a new skill: high-level value, skill regularizer.
    Boundary { q_z: f64, alpha_z: f64, kl_z: f64 },
    /// Same skill continues: low-level value and regularizer (a KL to the
    /// action prior, or a log-density in the uniform-prior ablation).
    Within { q_a: f64, alpha_a: f64, reg: f64 },
}

impl LlBranch {
    pub fn value(&self) -> f64 {
        match *self {
            LlBranch::Boundary { q_z, alpha_z, kl_z } => q_z - alpha_z * kl_z,
            LlBranch::Within { q_a, alpha_a, reg } => q_a - alpha_a * reg,
        }
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self, LlBranch::Boundary { .. })
    }
}

pub fn combine_ll_target(r: f64, gamma: f64, done: bool, branch: LlBranch) -> f64 {
    bootstrap(r, gamma, done, branch.value())
}

/// Soft actor-critic target with entropy bonus `−α log π(a′|s′)`.
pub fn sac_target(r: f64, gamma: f64, done: bool, q_next: f64, alpha: f64, log_prob_next: f64) -> f64 {
    bootstrap(r, gamma, done, q_next - alpha * log_prob_next)
}

/// One dual step on `log α`: up when the measured divergence exceeds
/// `delta`, down when below, clamped to [`LOG_ALPHA_RANGE`].
pub fn log_alpha_update(log_alpha: f64, measured: f64, delta: f64, rate: f64) -> f64 {
    (log_alpha + rate * (measured - delta)).clamp(LOG_ALPHA_RANGE.0, LOG_ALPHA_RANGE.1)
}

/// [`log_alpha_update`] expressed on `α` itself.
pub fn alpha_update(alpha: f64, measured: f64, delta: f64, rate: f64) -> f64 {
    (alpha * (rate * (measured - delta)).exp()).clamp(LOG_ALPHA_RANGE.0.exp(), LOG_ALPHA_RANGE.1.exp())
}

/// Expected low-level targets on a tabular instance, in the `Q_a` layout,
/// given exact successor values from `tables` and frozen regularizers.
/// At the fixed point these equal `tables.q_a`.
pub fn tabular_ll_targets(m: &TabularSemiMDP, reg: Option<&Regularization>, tables: &ValueTables) -> Vec<f64> {
    let (ns, na, nz, h) = (m.n_states, m.n_actions, m.n_skills, m.horizon);
    let kl_z = reg.map(|r| r.kl_z(m).expect("prior covers policy")).unwrap_or_else(|| vec![0.0; ns]);
    let kl_a = reg.map(|r| r.kl_a(m).expect("prior covers policy")).unwrap_or_else(|| vec![0.0; ns * nz * h]);
    let (alpha_z, alpha_a) = reg.map_or((0.0, 0.0), |r| (r.alpha_z, r.alpha_a));
    let mut out = Vec::with_capacity(ns * nz * h * na);
    for s in 0..ns {
        for z in 0..nz {
            for k in 0..h {
                let k2 = (k + 1) % h;
                for a in 0..na {
                    let r = m.r(s, a);
                    let mut t = 0.0;
                    for s2 in 0..ns {
                        let p = m.p(s, a, s2);
                        if p == 0.0 {
                            continue;
                        }
                        let branch = if k + 1 == h {
                            LlBranch::Boundary { q_z: tables.v_z[s2], alpha_z, kl_z: kl_z[s2] }
                        } else {
                            LlBranch::Within { q_a: tables.q_z(s2, z, k2), alpha_a, reg: kl_a[(s2 * nz + z) * h + k2] }
                        };
                        t += p * combine_ll_target(r, m.gamma, false, branch);
                    }
                    out.push(t);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::solve_regularized;
    use rand::{Rng, SeedableRng};

    #[test]
    fn done_returns_reward_exactly() {
        assert_eq!(bootstrap(0.7, 0.99, true, f64::NAN), 0.7);
        let b = LlBranch::Within { q_a: 1e9, alpha_a: 2.0, reg: 3.0 };
        assert_eq!(combine_ll_target(-0.25, 0.9, true, b), -0.25);
        assert_eq!(hl_target(3.5, 0.99, true, 10.0, 1.0, 1.0), 3.5);
    }

    #[test]
    fn boundary_without_regularizer_is_plain_bootstrap() {
        let b = LlBranch::Boundary { q_z: 4.0, alpha_z: 0.0, kl_z: 123.0 };
        assert_eq!(combine_ll_target(1.0, 0.5, false, b), 1.0 + 0.5 * 4.0);
    }

    /// With zero temperatures, one-step skills and a shared discount, the
    /// three targets are the same function of the same successor value.
    #[test]
    fn targets_collapse_to_flat_sac() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let r: f64 = rng.gen_range(-2.0..2.0);
            let gamma: f64 = rng.gen_range(0.0..1.0);
            let done = rng.gen_bool(0.2);
            let q: f64 = rng.gen_range(-50.0..50.0);
            let div: f64 = rng.gen_range(0.0..10.0);
            let h = hl_target(r, gamma, done, q, 0.0, div);
            // H = 1: every transition is the last of its skill.
            let l = combine_ll_target(r, gamma, done, LlBranch::Boundary { q_z: q, alpha_z: 0.0, kl_z: div });
            let f = sac_target(r, gamma, done, q, 0.0, div);
            assert!((h - l).abs() <= 1e-12 && (h - f).abs() <= 1e-12);
        }
    }

    #[test]
    fn alpha_step_direction_and_fixed_point() {
        assert_eq!(alpha_update(0.3, 5.0, 5.0, 0.1), 0.3);
        assert_eq!(log_alpha_update(-1.2, 5.0, 5.0, 0.1), -1.2);
        assert!(alpha_update(0.3, 6.0, 5.0, 0.1) > 0.3);
        assert!(alpha_update(0.3, 4.0, 5.0, 0.1) < 0.3);
        assert!(alpha_update(1e-300, -1e6, 0.0, 1.0) > 0.0);
    }

    #[test]
    fn constant_measurement_follows_closed_form() {
        let (rate, delta) = (1e-3, 10.0);
        for measured in [2.0, 30.0] {
            let mut la = 0.5f64.ln();
            let mut prev = la;
            for n in 1..=300 {
                la = log_alpha_update(la, measured, delta, rate);
                let closed = 0.5f64.ln() + n as f64 * rate * (measured - delta);
                assert!((la - closed).abs() < 1e-9, "step {n}: {la} vs {closed}");
                assert!(if measured > delta { la > prev } else { la < prev });
                prev = la;
            }
        }
    }

    #[test]
    fn tabular_targets_match_exact_recursion() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let m = TabularSemiMDP::random(&mut rng, 6, 3, 3, 3);
            let plain = solve_regularized(&m, None, 1e-13).unwrap();
            let t = tabular_ll_targets(&m, None, &plain);
            let dev = t.iter().zip(&plain.q_a).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(dev <= 1e-8, "unregularized deviation {dev}");

            let reg = Regularization {
                alpha_z: rng.gen_range(0.0..1.0),
                alpha_a: rng.gen_range(0.0..1.0),
                prior_z: mix(&m.pi_z, m.n_skills),
                prior_a: mix(&m.pi_a, m.n_actions),
            };
            let tables = solve_regularized(&m, Some(&reg), 1e-13).unwrap();
            let t = tabular_ll_targets(&m, Some(&reg), &tables);
            let dev = t.iter().zip(&tables.q_a).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(dev <= 1e-8, "regularized deviation {dev}");
        }
    }

    /// Full-support prior: half the policy, half uniform.
    fn mix(p: &[f64], width: usize) -> Vec<f64> {
        p.iter().map(|x| 0.5 * x + 0.5 / width as f64).collect()
    }
}
