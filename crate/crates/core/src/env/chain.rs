use super::EnvError;

/// Exact tables for a deterministic left/right chain. States `0..n` are the
/// chain; state `n` is an absorbing zero-reward sink. Acting in
/// `reward_state` pays 1 and moves to the sink, so the reward is collected
/// at most once. Action 0 moves left, action 1 moves right (both saturate).
#[derive(Clone, Debug, PartialEq)]
pub struct ChainTables {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub start: usize,
    /// `transition[(s * n_actions + a) * n_states + s']`
    pub transition: Vec<f64>,
    /// `reward[s * n_actions + a]`
    pub reward: Vec<f64>,
}

pub fn chain_env(n_states: usize, horizon: usize, reward_state: usize) -> Result<ChainTables, EnvError> {
    if n_states == 0 || n_states > 10 {
        return Err(EnvError::InvalidArgument("chain length must be in 1..=10".into()));
    }
    if reward_state >= n_states || horizon == 0 {
        return Err(EnvError::InvalidArgument("reward state must be on the chain and horizon ≥ 1".into()));
    }
    let total = n_states + 1;
    let sink = n_states;
    let mut transition = vec![0.0; total * 2 * total];
    let mut reward = vec![0.0; total * 2];
    for s in 0..total {
        for a in 0..2 {
            let next = if s == sink || s == reward_state {
                sink
            } else if a == 0 {
                s.saturating_sub(1)
            } else {
                (s + 1).min(n_states - 1)
            };
            transition[(s * 2 + a) * total + next] = 1.0;
            if s == reward_state {
                reward[s * 2 + a] = 1.0;
            }
        }
    }
    Ok(ChainTables { n_states: total, n_actions: 2, horizon, start: 0, transition, reward })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_stochastic_and_sink_absorbs() {
        let c = chain_env(4, 2, 3).unwrap();
        for row in c.transition.chunks(c.n_states) {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
        assert_eq!(c.transition[(4 * 2) * 5 + 4], 1.0);
        assert!(chain_env(11, 1, 0).is_err());
    }
}
