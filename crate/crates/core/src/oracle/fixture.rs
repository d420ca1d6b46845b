//! Human-readable instance files.
//!
//! ```text
//! # comment
//! states 2
//! actions 2
//! skills 2
//! horizon 2
//! gamma 0.5
//! transition      (one row per (s, a): |S| probabilities)
//! reward          (one row per s: |A| values)
//! pi_a            (one row per (s, z, k): |A| probabilities)
//! pi_z            (one row per s: |Z| probabilities)
//! ```

use std::fmt::Write as _;

use super::{OracleError, TabularSemiMDP};

pub fn parse_fixture(text: &str) -> Result<TabularSemiMDP, OracleError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let mut pos = 0;
    let err = |line: usize, msg: String| OracleError::Parse { line, msg };
    let mut header = |key: &str| -> Result<(usize, String), OracleError> {
        let (ln, l) = *lines.get(pos).ok_or_else(|| err(0, format!("missing {key}")))?;
        pos += 1;
        let v = l
            .strip_prefix(key)
            .ok_or_else(|| err(ln, format!("expected {key}")))?
            .trim();
        Ok((ln, v.to_string()))
    };
    let uint = |(ln, v): (usize, String)| v.parse::<usize>().map_err(|_| err(ln, format!("bad integer {v:?}")));
    let n_states = uint(header("states")?)?;
    let n_actions = uint(header("actions")?)?;
    let n_skills = uint(header("skills")?)?;
    let horizon = uint(header("horizon")?)?;
    let (gl, gv) = header("gamma")?;
    let gamma = gv.parse::<f64>().map_err(|_| err(gl, "bad gamma".into()))?;

    let mut table = |name: &str, rows: usize, width: usize| -> Result<Vec<f64>, OracleError> {
        let (ln, l) = *lines.get(pos).ok_or_else(|| err(0, format!("missing {name}")))?;
        if l != name {
            return Err(err(ln, format!("expected section {name}")));
        }
        pos += 1;
        let mut out = Vec::with_capacity(rows * width);
        for _ in 0..rows {
            let (ln, l) = *lines.get(pos).ok_or_else(|| err(0, format!("{name} is truncated")))?;
            pos += 1;
            let row: Vec<f64> = l
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| err(ln, format!("bad number {v:?}"))))
                .collect::<Result<_, _>>()?;
            if row.len() != width {
                return Err(err(ln, format!("expected {width} values, found {}", row.len())));
            }
            out.extend(row);
        }
        Ok(out)
    };
    let transition = table("transition", n_states * n_actions, n_states)?;
    let reward = table("reward", n_states, n_actions)?;
    let pi_a = table("pi_a", n_states * n_skills * horizon, n_actions)?;
    let pi_z = table("pi_z", n_states, n_skills)?;
    let m = TabularSemiMDP {
        n_states,
        n_actions,
        n_skills,
        horizon,
        gamma,
        transition,
        reward,
        pi_a,
        pi_z,
        beta_mutation: false,
    };
    m.validate()?;
    Ok(m)
}

pub fn write_fixture(m: &TabularSemiMDP) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "states {}\nactions {}\nskills {}\nhorizon {}\ngamma {}", m.n_states, m.n_actions, m.n_skills, m.horizon, m.gamma);
    let mut section = |name: &str, data: &[f64], width: usize| {
        let _ = writeln!(s, "{name}");
        for row in data.chunks(width) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", cells.join(" "));
        }
    };
    section("transition", &m.transition, m.n_states);
    section("reward", &m.reward, m.n_actions);
    section("pi_a", &m.pi_a, m.n_actions);
    section("pi_z", &m.pi_z, m.n_skills);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{check_beta_cases, solve_semi_mdp};
    use rand::SeedableRng;

    /// Two states, two actions (0 stays, 1 switches), two skills, H = 2,
    /// γ = 1/2. Skill 0 always stays; skill 1 switches first, then stays.
    /// Skills are chosen uniformly in both states.
    const HAND: &str = "
        states 2
        actions 2
        skills 2
        horizon 2
        gamma 0.5
        transition
        1 0   # s0 stay
        0 1   # s0 switch
        0 1   # s1 stay
        1 0   # s1 switch
        reward
        1 0
        0 2
        pi_a
        1 0   # s0 z0 k0
        1 0   # s0 z0 k1
        0 1   # s0 z1 k0
        1 0   # s0 z1 k1
        1 0   # s1 z0 k0
        1 0   # s1 z0 k1
        0 1   # s1 z1 k0
        1 0   # s1 z1 k1
        pi_z
        0.5 0.5
        0.5 0.5
    ";

    #[test]
    fn hand_instance_matches_hand_computed_values() {
        let m = parse_fixture(HAND).unwrap();
        let t = solve_semi_mdp(&m, 1e-14).unwrap();
        // Hand solution. Skill values at a boundary:
        //   Q_z(s0,z0) = 1 + γ(1 + γV0)   Q_z(s0,z1) = 0 + γ(0 + γV1)
        //   Q_z(s1,z0) = 0 + γ(0 + γV1)   Q_z(s1,z1) = 2 + γ(1 + γV0)
        // with V = mean over skills gives V0 = 13/12, V1 = 19/12. Then
        //   Q_a(s0,z0,k1,stay)   = 1 + γV0 = 37/24            (boundary branch)
        //   Q_a(s0,z1,k0,switch) = 0 + γ·Q_a(s1,z1,k1,stay) = γ(γV1) = 19/48
        assert!((t.v_z[0] - 13.0 / 12.0).abs() < 1e-12);
        assert!((t.v_z[1] - 19.0 / 12.0).abs() < 1e-12);
        assert!((t.q_a(0, 0, 1, 0) - 37.0 / 24.0).abs() < 1e-12);
        assert!((t.q_a(0, 1, 0, 1) - 19.0 / 48.0).abs() < 1e-12);
        let rep = check_beta_cases(&m, &t, 1e-12);
        assert!(!rep.flagged(), "{rep:?}");
    }

    #[test]
    fn write_then_parse_round_trips() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        let m = TabularSemiMDP::random(&mut rng, 4, 2, 2, 2);
        assert_eq!(parse_fixture(&write_fixture(&m)).unwrap(), m);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let bad = HAND.replace("0.5 0.5\n        0.5 0.5", "0.5 0.5\n        0.5");
        match parse_fixture(&bad) {
            Err(OracleError::Parse { line, .. }) => assert!(line > 0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
