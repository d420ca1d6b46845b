//! Exact tabular checks of the semi-MDP value identities and of the
//! parallel high/low MDP construction.
//!
//! States of the skill process are triples `(s, z, k)` with phase `k = t mod H`
//! and termination `β(k) = 1[k = 0]`:
//!
//! ```text
//! Q_a(s,z,k,a) = r(s,a) + γ Σ_s' p(s'|s,a) U(s',z,k'),   k' = (k+1) mod H
//! U(s',z,k')   = (1 − β(k'))·Q_z(s',z,k') + β(k')·V_z(s')
//! Q_z(s,z,k)   = Σ_a π_a(a|s,z,k) Q_a(s,z,k,a)
//! V_z(s)       = Σ_z π_z(z|s) Q_z(s,z,0)
//! ```

mod enumerate;
mod fixture;
mod flat;
mod solve;
mod suite;

pub use enumerate::{enumerate_q_a, tree_walk_q_a};
pub use fixture::{parse_fixture, write_fixture};
pub use flat::{build_high_mdp, build_low_mdp, FlatMdp, HighReward, LowIndex};
pub use solve::{check_beta_cases, solve_regularized, solve_semi_mdp, BetaReport, Regularization, ValueTables};
pub use suite::{run_verification, CheckResult, SuiteConfig, VerifyReport};

use rand::Rng;

use crate::env::ChainTables;

pub const ROW_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("value iteration did not converge in {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("policy-evaluation system is singular")]
    Singular,
    #[error("fixture line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Finite skill process with exact tables. Index layouts:
/// `transition[(s·A + a)·S + s']`, `reward[s·A + a]`,
/// `pi_a[((s·Z + z)·H + k)·A + a]`, `pi_z[s·Z + z]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularSemiMDP {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_skills: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub transition: Vec<f64>,
    pub reward: Vec<f64>,
    pub pi_a: Vec<f64>,
    pub pi_z: Vec<f64>,
    /// Negative control: replaces the termination rule with `β ≡ 0`.
    #[doc(hidden)]
    pub beta_mutation: bool,
}

impl TabularSemiMDP {
    pub fn p(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s2]
    }

    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn pa(&self, s: usize, z: usize, k: usize, a: usize) -> f64 {
        self.pi_a[((s * self.n_skills + z) * self.horizon + k) * self.n_actions + a]
    }

    pub fn pz(&self, s: usize, z: usize) -> f64 {
        self.pi_z[s * self.n_skills + z]
    }

    pub fn beta(&self, k: usize) -> bool {
        !self.beta_mutation && k == 0
    }

    pub fn next_phase(&self, k: usize) -> usize {
        (k + 1) % self.horizon
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let (s, a, z, h) = (self.n_states, self.n_actions, self.n_skills, self.horizon);
        let bad = |m: String| Err(OracleError::InvalidInstance(m));
        if s == 0 || a == 0 || z == 0 || h == 0 {
            return bad("all table sizes and the horizon must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("discount {} outside [0, 1]", self.gamma));
        }
        let sizes = [
            ("transition", self.transition.len(), s * a * s),
            ("reward", self.reward.len(), s * a),
            ("pi_a", self.pi_a.len(), s * z * h * a),
            ("pi_z", self.pi_z.len(), s * z),
        ];
        for (name, got, want) in sizes {
            if got != want {
                return bad(format!("{name} has {got} entries, expected {want}"));
            }
        }
        if !self.reward.iter().all(|r| r.is_finite()) {
            return bad("non-finite reward".into());
        }
        check_rows("transition", &self.transition, s)?;
        check_rows("pi_a", &self.pi_a, a)?;
        check_rows("pi_z", &self.pi_z, z)?;
        Ok(())
    }

    /// Wraps exact chain tables with the given policies.
    pub fn from_chain(c: &ChainTables, n_skills: usize, gamma: f64, pi_a: Vec<f64>, pi_z: Vec<f64>) -> Result<Self, OracleError> {
        let m = Self {
            n_states: c.n_states,
            n_actions: c.n_actions,
            n_skills,
            horizon: c.horizon,
            gamma,
            transition: c.transition.clone(),
            reward: c.reward.clone(),
            pi_a,
            pi_z,
            beta_mutation: false,
        };
        m.validate()?;
        Ok(m)
    }

    /// Random instance with `|S| ≤ max_states`, etc. Transition and policy
    /// rows are sparse-ish random simplex points.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_states: usize, max_actions: usize, max_skills: usize, max_horizon: usize) -> Self {
        let s = rng.gen_range(2..=max_states.max(2));
        let a = rng.gen_range(1..=max_actions.max(1));
        let z = rng.gen_range(1..=max_skills.max(1));
        let h = rng.gen_range(1..=max_horizon.max(1));
        let gamma = rng.gen_range(0.5..0.95);
        let transition = random_rows(rng, s * a, s);
        let reward = (0..s * a).map(|_| rng.gen_range(0.0..1.0)).collect();
        let pi_a = random_rows(rng, s * z * h, a);
        let pi_z = random_rows(rng, s, z);
        Self { n_states: s, n_actions: a, n_skills: z, horizon: h, gamma, transition, reward, pi_a, pi_z, beta_mutation: false }
    }

    /// Reward-free state that every action maps back to itself.
    pub fn is_absorbing(&self, s: usize) -> bool {
        (0..self.n_actions).all(|a| self.p(s, a, s) == 1.0 && self.r(s, a) == 0.0)
    }

    /// Episodic variant: adds an absorbing zero-reward terminal state that
    /// every other state reaches with probability ≥ 0.1 per step, and sets
    /// `γ = 1`.
    pub fn random_episodic<R: Rng + ?Sized>(rng: &mut R, max_states: usize, max_actions: usize, max_skills: usize, max_horizon: usize) -> Self {
        let base = Self::random(rng, max_states, max_actions, max_skills, max_horizon);
        let (s, a, z, h) = (base.n_states + 1, base.n_actions, base.n_skills, base.horizon);
        let term = s - 1;
        let mut transition = vec![0.0; s * a * s];
        let mut reward = vec![0.0; s * a];
        for st in 0..s {
            for ac in 0..a {
                let row = &mut transition[(st * a + ac) * s..(st * a + ac + 1) * s];
                if st == term {
                    row[term] = 1.0;
                    continue;
                }
                let stop = rng.gen_range(0.1..0.5);
                for s2 in 0..base.n_states {
                    row[s2] = (1.0 - stop) * base.p(st, ac, s2);
                }
                row[term] = stop;
                normalize(row);
                reward[st * a + ac] = base.r(st, ac);
            }
        }
        let pi_a = random_rows(rng, s * z * h, a);
        let pi_z = random_rows(rng, s, z);
        Self { n_states: s, n_actions: a, n_skills: z, horizon: h, gamma: 1.0, transition, reward, pi_a, pi_z, beta_mutation: false }
    }
}

fn check_rows(name: &str, table: &[f64], width: usize) -> Result<(), OracleError> {
    for (i, row) in table.chunks(width).enumerate() {
        if row.iter().any(|p| !(*p >= 0.0)) {
            return Err(OracleError::InvalidInstance(format!("{name} row {i} has a negative entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_TOL {
            return Err(OracleError::InvalidInstance(format!("{name} row {i} sums to {sum}")));
        }
    }
    Ok(())
}

fn normalize(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= sum;
    }
    // Push the rounding residue into the largest entry so rows sum to 1 tightly.
    let resid = 1.0 - row.iter().sum::<f64>();
    if let Some(max) = row.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max += resid;
    }
}

fn random_rows<R: Rng + ?Sized>(rng: &mut R, n_rows: usize, width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_rows * width);
    for _ in 0..n_rows {
        let mut row: Vec<f64> = (0..width)
            .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.05..1.0) })
            .collect();
        if row.iter().all(|p| *p == 0.0) {
            row[rng.gen_range(0..width)] = 1.0;
        }
        normalize(&mut row);
        out.extend(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn random_instances_validate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            TabularSemiMDP::random(&mut rng, 6, 3, 3, 3).validate().unwrap();
            let e = TabularSemiMDP::random_episodic(&mut rng, 5, 3, 3, 3);
            e.validate().unwrap();
            assert_eq!(e.gamma, 1.0);
        }
    }

    #[test]
    fn validation_catches_bad_rows() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut m = TabularSemiMDP::random(&mut rng, 3, 2, 2, 2);
        m.pi_z[0] += 0.1;
        assert!(m.validate().is_err());
    }
}
