//! Brute-force truncated returns over the trajectory tree.
//!
//! `enumerate_q_a` sums over every branch (action, successor, fresh skill)
//! to a fixed depth, sharing identical subtrees through a memo table keyed by
//! `(s, z, k, a, remaining depth)`. `tree_walk_q_a` visits every path
//! literally and is only usable at small depths; it exists to validate the
//! memoized walk.

use std::collections::HashMap;

use super::TabularSemiMDP;

type Key = (usize, usize, usize, usize, usize);

/// Expected discounted sum of the first `depth` rewards after taking `a` in
/// `(s, z, k)`, in the `q_a` layout of [`super::ValueTables`].
pub fn enumerate_q_a(m: &TabularSemiMDP, depth: usize) -> Vec<f64> {
    let mut memo = HashMap::new();
    let mut out = Vec::with_capacity(m.pi_a.len());
    for s in 0..m.n_states {
        for z in 0..m.n_skills {
            for k in 0..m.horizon {
                for a in 0..m.n_actions {
                    out.push(q_memo(m, (s, z, k, a, depth), &mut memo));
                }
            }
        }
    }
    out
}

fn q_memo(m: &TabularSemiMDP, key: Key, memo: &mut HashMap<Key, f64>) -> f64 {
    let (s, z, k, a, d) = key;
    if d == 0 {
        return 0.0;
    }
    if let Some(v) = memo.get(&key) {
        return *v;
    }
    let mut total = m.r(s, a);
    if d > 1 {
        let k2 = m.next_phase(k);
        for s2 in 0..m.n_states {
            let p = m.p(s, a, s2);
            if p == 0.0 {
                continue;
            }
            let mut branch = 0.0;
            if m.beta(k2) {
                for z2 in 0..m.n_skills {
                    let pz = m.pz(s2, z2);
                    if pz == 0.0 {
                        continue;
                    }
                    for a2 in 0..m.n_actions {
                        let pa = m.pa(s2, z2, 0, a2);
                        if pa != 0.0 {
                            branch += pz * pa * q_memo(m, (s2, z2, 0, a2, d - 1), memo);
                        }
                    }
                }
            } else {
                for a2 in 0..m.n_actions {
                    let pa = m.pa(s2, z, k2, a2);
                    if pa != 0.0 {
                        branch += pa * q_memo(m, (s2, z, k2, a2, d - 1), memo);
                    }
                }
            }
            total += m.gamma * p * branch;
        }
    }
    memo.insert(key, total);
    total
}

/// Literal path enumeration: every trajectory of length `depth` contributes
/// its probability times its discounted return.
pub fn tree_walk_q_a(m: &TabularSemiMDP, depth: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.pi_a.len());
    for s in 0..m.n_states {
        for z in 0..m.n_skills {
            for k in 0..m.horizon {
                for a in 0..m.n_actions {
                    let mut acc = 0.0;
                    walk(m, s, z, k, a, depth, 1.0, 1.0, &mut acc);
                    out.push(acc);
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn walk(m: &TabularSemiMDP, s: usize, z: usize, k: usize, a: usize, d: usize, prob: f64, disc: f64, acc: &mut f64) {
    if d == 0 {
        return;
    }
    *acc += prob * disc * m.r(s, a);
    if d == 1 {
        return;
    }
    let k2 = m.next_phase(k);
    for s2 in 0..m.n_states {
        let p = m.p(s, a, s2);
        if p == 0.0 {
            continue;
        }
        if m.beta(k2) {
            for z2 in 0..m.n_skills {
                for a2 in 0..m.n_actions {
                    let w = p * m.pz(s2, z2) * m.pa(s2, z2, 0, a2);
                    if w != 0.0 {
                        walk(m, s2, z2, 0, a2, d - 1, prob * w, disc * m.gamma, acc);
                    }
                }
            }
        } else {
            for a2 in 0..m.n_actions {
                let w = p * m.pa(s2, z, k2, a2);
                if w != 0.0 {
                    walk(m, s2, z, k2, a2, d - 1, prob * w, disc * m.gamma, acc);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::chain_env;
    use crate::oracle::solve_semi_mdp;
    use rand::SeedableRng;

    #[test]
    fn memoized_walk_matches_literal_walk() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let m = TabularSemiMDP::random(&mut rng, 3, 2, 2, 3);
            let a = enumerate_q_a(&m, 5);
            let b = tree_walk_q_a(&m, 5);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deep_enumeration_brackets_fixed_point() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let m = TabularSemiMDP::random(&mut rng, 5, 2, 2, 2);
        let t = solve_semi_mdp(&m, 1e-12).unwrap();
        let e = enumerate_q_a(&m, 40);
        let bound = m.gamma.powi(40) / (1.0 - m.gamma) + 1e-9;
        for (x, y) in e.iter().zip(&t.q_a) {
            assert!((x - y).abs() <= bound);
        }
    }

    #[test]
    fn chain_optimal_return_by_enumeration() {
        // Five-state chain with reward at the far end: the always-right
        // policy collects γ^4 from the start; enumerating all deterministic
        // single-skill policies finds nothing better.
        let c = chain_env(5, 2, 4).unwrap();
        let gamma = 0.9;
        let n = c.n_states;
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << n) {
            let pi_a: Vec<f64> = (0..n * 2)
                .flat_map(|i| {
                    let s = i / 2;
                    let right = (mask >> s) & 1 == 1;
                    if right { [0.0, 1.0] } else { [1.0, 0.0] }
                })
                .collect();
            let m = TabularSemiMDP::from_chain(&c, 1, gamma, pi_a, vec![1.0; n]).unwrap();
            let q = enumerate_q_a(&m, 40);
            let v0: f64 = (0..2).map(|a| m.pa(0, 0, 0, a) * q[a]).sum();
            best = best.max(v0);
        }
        assert!((best - gamma.powi(4)).abs() < 1e-12);
    }

    #[test]
    fn chain_trivial_cases() {
        // Reward at the start: value 1 regardless of the policy.
        let c = chain_env(3, 1, 0).unwrap();
        let m = TabularSemiMDP::from_chain(&c, 1, 0.9, vec![0.5; c.n_states * 2], vec![1.0; c.n_states]).unwrap();
        let t = solve_semi_mdp(&m, 1e-12).unwrap();
        assert!((t.v_z[0] - 1.0).abs() < 1e-12);
        // Two states, reward at 1: moving right beats staying.
        let c = chain_env(2, 1, 1).unwrap();
        let m = TabularSemiMDP::from_chain(&c, 1, 0.9, vec![0.5; c.n_states * 2], vec![1.0; c.n_states]).unwrap();
        let t = solve_semi_mdp(&m, 1e-12).unwrap();
        assert!(t.q_a(0, 0, 0, 1) > t.q_a(0, 0, 0, 0));
    }
}
