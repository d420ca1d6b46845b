//! Flat MDPs derived from a skill process, evaluated by a direct linear solve.

use nalgebra::{DMatrix, DVector};

use super::{check_rows, OracleError, TabularSemiMDP};

/// `transition[(x·A + a)·X + x']`, `reward[x·A + a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub transition: Vec<f64>,
    pub reward: Vec<f64>,
    /// States whose value is pinned to zero. Needed for `γ = 1`, where the
    /// linear system is singular on a reward-free closed class.
    pub terminal: Vec<bool>,
}

impl FlatMdp {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.transition.len() != self.n_states * self.n_actions * self.n_states
            || self.reward.len() != self.n_states * self.n_actions
            || self.terminal.len() != self.n_states
        {
            return Err(OracleError::InvalidInstance("flat MDP tables have wrong sizes".into()));
        }
        check_rows("flat transition", &self.transition, self.n_states)
    }

    /// Largest `|Σ_x' p(x'|x,a) − 1|` over all rows.
    pub fn max_row_error(&self) -> f64 {
        self.transition
            .chunks(self.n_states)
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Exact policy evaluation: solves `(I − γ P_π) V = r_π` by LU and returns
    /// `(V, Q)` with `Q[x·A + a]`.
    pub fn evaluate(&self, policy: &[f64]) -> Result<(Vec<f64>, Vec<f64>), OracleError> {
        let (nx, na) = (self.n_states, self.n_actions);
        if policy.len() != nx * na {
            return Err(OracleError::InvalidInstance("policy table has wrong size".into()));
        }
        let mut a = DMatrix::<f64>::identity(nx, nx);
        let mut b = DVector::<f64>::zeros(nx);
        for x in 0..nx {
            if self.terminal[x] {
                continue;
            }
            for act in 0..na {
                let w = policy[x * na + act];
                if w == 0.0 {
                    continue;
                }
                b[x] += w * self.reward[x * na + act];
                let row = &self.transition[(x * na + act) * nx..(x * na + act + 1) * nx];
                for (x2, p) in row.iter().enumerate() {
                    if *p != 0.0 {
                        a[(x, x2)] -= self.gamma * w * p;
                    }
                }
            }
        }
        let v = a.lu().solve(&b).ok_or(OracleError::Singular)?;
        if !v.iter().all(|x| x.is_finite()) {
            return Err(OracleError::Singular);
        }
        let mut q = vec![0.0; nx * na];
        for x in 0..nx {
            for act in 0..na {
                let row = &self.transition[(x * na + act) * nx..(x * na + act + 1) * nx];
                let cont: f64 = row.iter().zip(v.iter()).map(|(p, vx)| p * vx).sum();
                q[x * na + act] = self.reward[x * na + act] + self.gamma * cont;
            }
        }
        Ok((v.iter().copied().collect(), q))
    }
}

/// Index map of the low MDP's augmented state `(s, z, k)`.
#[derive(Clone, Copy, Debug)]
pub struct LowIndex {
    pub n_skills: usize,
    pub horizon: usize,
}

impl LowIndex {
    pub fn index(&self, s: usize, z: usize, k: usize) -> usize {
        (s * self.n_skills + z) * self.horizon + k
    }
}

/// Low MDP over `(s, z, k)` with actions `a`: the environment transition is
/// composed with skill persistence for `k < H−1` and with a fresh skill
/// `z' ∼ π_z(·|s')` at phase 0 for `k = H−1`. Returns the MDP and `π_a`
/// as a flat policy table.
pub fn build_low_mdp(m: &TabularSemiMDP) -> Result<(FlatMdp, Vec<f64>, LowIndex), OracleError> {
    m.validate()?;
    let (ns, na, nz, h) = (m.n_states, m.n_actions, m.n_skills, m.horizon);
    let idx = LowIndex { n_skills: nz, horizon: h };
    let nx = ns * nz * h;
    let mut transition = vec![0.0; nx * na * nx];
    let mut reward = vec![0.0; nx * na];
    let mut policy = vec![0.0; nx * na];
    for s in 0..ns {
        for z in 0..nz {
            for k in 0..h {
                let x = idx.index(s, z, k);
                for a in 0..na {
                    reward[x * na + a] = m.r(s, a);
                    policy[x * na + a] = m.pa(s, z, k, a);
                    let row = &mut transition[(x * na + a) * nx..(x * na + a + 1) * nx];
                    for s2 in 0..ns {
                        let p = m.p(s, a, s2);
                        if p == 0.0 {
                            continue;
                        }
                        if k + 1 < h {
                            row[idx.index(s2, z, k + 1)] += p;
                        } else {
                            for z2 in 0..nz {
                                row[idx.index(s2, z2, 0)] += p * m.pz(s2, z2);
                            }
                        }
                    }
                }
            }
        }
    }
    let terminal = (0..nx).map(|x| m.is_absorbing(x / (nz * h))).collect();
    let mdp = FlatMdp { n_states: nx, n_actions: na, gamma: m.gamma, transition, reward, terminal };
    Ok((mdp, policy, idx))
}

/// Reward of the high MDP.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HighReward {
    /// Undiscounted sum of the H within-skill rewards.
    Undiscounted,
    /// Diagnostic only: rewards discounted by `γ^k` within the skill. Paired
    /// with `γ_z = γ^H` this reproduces `V_z` exactly.
    WithinSkillDiscounted,
}

/// High MDP over environment states at skill boundaries with actions `z`:
/// H-step transition under `π_a`, expected H-step reward, discount `γ_z`.
/// Returns the MDP and `π_z` as a flat policy table.
pub fn build_high_mdp(m: &TabularSemiMDP, gamma_z: f64, reward_mode: HighReward) -> Result<(FlatMdp, Vec<f64>), OracleError> {
    m.validate()?;
    let (ns, na, nz, h) = (m.n_states, m.n_actions, m.n_skills, m.horizon);
    let mut transition = vec![0.0; ns * nz * ns];
    let mut reward = vec![0.0; ns * nz];
    for s in 0..ns {
        for z in 0..nz {
            let mut dist = vec![0.0; ns];
            dist[s] = 1.0;
            let mut total = 0.0;
            let mut disc = 1.0;
            for k in 0..h {
                let mut next = vec![0.0; ns];
                let mut r_k = 0.0;
                for (s1, &d) in dist.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for a in 0..na {
                        let w = d * m.pa(s1, z, k, a);
                        if w == 0.0 {
                            continue;
                        }
                        r_k += w * m.r(s1, a);
                        for (s2, n) in next.iter_mut().enumerate() {
                            *n += w * m.p(s1, a, s2);
                        }
                    }
                }
                total += match reward_mode {
                    HighReward::Undiscounted => r_k,
                    HighReward::WithinSkillDiscounted => disc * r_k,
                };
                disc *= m.gamma;
                dist = next;
            }
            reward[s * nz + z] = total;
            transition[(s * nz + z) * ns..(s * nz + z + 1) * ns].copy_from_slice(&dist);
        }
    }
    let terminal = (0..ns).map(|s| m.is_absorbing(s)).collect();
    let mdp = FlatMdp { n_states: ns, n_actions: nz, gamma: gamma_z, transition, reward, terminal };
    Ok((mdp, m.pi_z.clone()))
}
