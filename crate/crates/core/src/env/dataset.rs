//! Demonstration dataset file.
//!
//! ```text
//! skill-critic-demos v1
//! planner rows=7 cols=7 wall_prob=0.25 ...
//! count N
//! fields states actions layout_id seed
//! <one tab-separated record per trajectory>
//! ```
//! States are `|`-separated observation vectors with `,`-separated
//! components; actions likewise. Floats use the shortest round-trip form.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::index::sample;

use super::planner::{generate_layout, replay_trajectory, PlannerConfig, Trajectory};
use super::EnvError;
use crate::rng::SimRng;

pub const DATASET_VERSION: u32 = 1;
const MAGIC: &str = "skill-critic-demos";

#[derive(Clone, Debug, PartialEq)]
pub struct DemoDataset {
    pub planner: PlannerConfig,
    pub trajectories: Vec<Trajectory>,
}

fn planner_line(p: &PlannerConfig) -> String {
    format!(
        "planner rows={} cols={} wall_prob={} cell_size={} max_velocity={} goal_threshold={} speed={} min_steps={} max_retries={}",
        p.rows, p.cols, p.wall_prob, p.cell_size, p.max_velocity, p.goal_threshold, p.speed, p.min_steps, p.max_retries
    )
}

fn parse_planner(line: &str) -> Result<PlannerConfig, EnvError> {
    let bad = |m: String| EnvError::Dataset(m);
    let mut p = PlannerConfig::default();
    let rest = line.strip_prefix("planner ").ok_or_else(|| bad("missing planner line".into()))?;
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("bad planner field {kv}")))?;
        let f = || v.parse::<f64>().map_err(|_| bad(format!("bad value for {k}")));
        let u = || v.parse::<usize>().map_err(|_| bad(format!("bad value for {k}")));
        match k {
            "rows" => p.rows = u()?,
            "cols" => p.cols = u()?,
            "wall_prob" => p.wall_prob = f()?,
            "cell_size" => p.cell_size = f()?,
            "max_velocity" => p.max_velocity = f()?,
            "goal_threshold" => p.goal_threshold = f()?,
            "speed" => p.speed = f()?,
            "min_steps" => p.min_steps = u()?,
            "max_retries" => p.max_retries = u()?,
            other => return Err(bad(format!("unknown planner field {other}"))),
        }
    }
    Ok(p)
}

fn join_vectors<'a>(rows: impl Iterator<Item = &'a [f64]>) -> String {
    let mut s = String::new();
    for (i, row) in rows.enumerate() {
        if i > 0 {
            s.push('|');
        }
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            write!(s, "{v}").expect("writing to a String");
        }
    }
    s
}

fn split_vectors(s: &str) -> Result<Vec<Vec<f64>>, EnvError> {
    s.split('|')
        .map(|row| {
            row.split(',')
                .map(|v| v.parse::<f64>().map_err(|_| EnvError::Dataset(format!("bad number {v:?}"))))
                .collect()
        })
        .collect()
}

pub fn save_dataset(path: &Path, data: &DemoDataset) -> Result<(), EnvError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{MAGIC} v{DATASET_VERSION}")?;
    writeln!(w, "{}", planner_line(&data.planner))?;
    writeln!(w, "count {}", data.trajectories.len())?;
    writeln!(w, "fields states actions layout_id seed")?;
    for t in &data.trajectories {
        let states = join_vectors(t.states.iter().map(|s| s.as_slice()));
        let actions = join_vectors(t.actions.iter().map(|a| a.as_slice()));
        writeln!(w, "{states}\t{actions}\t{}\t{}", t.layout_id, t.seed)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<DemoDataset, EnvError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let mut next = || -> Result<String, EnvError> {
        lines.next().ok_or_else(|| EnvError::Dataset("truncated header".into()))?.map_err(EnvError::from)
    };
    let header = next()?;
    let version = header
        .strip_prefix(MAGIC)
        .and_then(|v| v.trim().strip_prefix('v'))
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| EnvError::Dataset("not a demonstration file".into()))?;
    if version != DATASET_VERSION {
        return Err(EnvError::Dataset(format!("unsupported version {version}")));
    }
    let planner = parse_planner(&next()?)?;
    let count: usize = next()?
        .strip_prefix("count ")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| EnvError::Dataset("bad count line".into()))?;
    if next()? != "fields states actions layout_id seed" {
        return Err(EnvError::Dataset("unexpected field order".into()));
    }
    let mut trajectories = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next()?;
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 4 {
            return Err(EnvError::Dataset("record must have four fields".into()));
        }
        let states = split_vectors(parts[0])?;
        let actions = split_vectors(parts[1])?
            .into_iter()
            .map(|a| <[f64; 2]>::try_from(a).map_err(|_| EnvError::Dataset("action must have two components".into())))
            .collect::<Result<Vec<_>, _>>()?;
        let layout_id = parts[2].parse().map_err(|_| EnvError::Dataset("bad layout id".into()))?;
        let seed = parts[3].parse().map_err(|_| EnvError::Dataset("bad seed".into()))?;
        trajectories.push(Trajectory { states, actions, layout_id, seed });
    }
    Ok(DemoDataset { planner, trajectories })
}

/// Replays a random `fraction` of the trajectories (at least one) against
/// regenerated layouts. Returns the number checked.
pub fn validate_replay(data: &DemoDataset, fraction: f64, rng: &mut SimRng) -> Result<usize, EnvError> {
    let n = data.trajectories.len();
    if n == 0 {
        return Ok(0);
    }
    let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
    for i in sample(rng, n, k).into_iter() {
        let t = &data.trajectories[i];
        let spec = generate_layout(t.layout_id, &data.planner)?;
        replay_trajectory(&spec, t, i)?;
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::generate_demonstrations;

    #[test]
    fn save_load_round_trip_and_replay() {
        let planner = PlannerConfig::default();
        let data = DemoDataset { trajectories: generate_demonstrations(2, 5, &planner).unwrap(), planner };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demos.txt");
        save_dataset(&path, &data).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, data);
        let mut rng = crate::rng::stream(0, crate::rng::Stream::Layout);
        assert_eq!(validate_replay(&back, 1.0, &mut rng).unwrap(), 5);
    }

    #[test]
    fn tampered_record_fails_replay() {
        let planner = PlannerConfig::default();
        let mut data = DemoDataset { trajectories: generate_demonstrations(2, 1, &planner).unwrap(), planner };
        data.trajectories[0].actions[0][0] += 0.01;
        let mut rng = crate::rng::stream(0, crate::rng::Stream::Layout);
        assert!(validate_replay(&data, 1.0, &mut rng).is_err());
    }
}
