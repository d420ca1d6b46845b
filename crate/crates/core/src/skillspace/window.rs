use rand::Rng;

use super::{Result, SkillError};
use crate::env::DemoDataset;

/// `H` consecutive (observation, action) pairs from one demonstration.
#[derive(Clone, Debug, PartialEq)]
pub struct SkillWindow {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
}

impl SkillWindow {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
}

/// Uniform sampler over every `(trajectory, offset)` pair that yields a full
/// window. Trajectories shorter than `H` contribute nothing.
#[derive(Clone, Debug)]
pub struct WindowSampler {
    horizon: usize,
    /// `(trajectory index, cumulative window count before it)`.
    starts: Vec<(usize, usize)>,
    total: usize,
}

impl WindowSampler {
    pub fn new(data: &DemoDataset, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(SkillError::Config("horizon must be at least 1".into()));
        }
        let mut starts = Vec::new();
        let mut total = 0;
        for (i, t) in data.trajectories.iter().enumerate() {
            if t.len() >= horizon {
                starts.push((i, total));
                total += t.len() - horizon + 1;
            }
        }
        if total == 0 {
            return Err(SkillError::NoWindows { horizon });
        }
        Ok(Self { horizon, starts, total })
    }

    /// Number of distinct windows.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Maps a flat window index to `(trajectory, offset)`.
    pub fn locate(&self, flat: usize) -> (usize, usize) {
        let pos = self.starts.partition_point(|&(_, before)| before <= flat) - 1;
        let (traj, before) = self.starts[pos];
        (traj, flat - before)
    }

    pub fn window(&self, data: &DemoDataset, traj: usize, offset: usize) -> SkillWindow {
        let t = &data.trajectories[traj];
        let r = offset..offset + self.horizon;
        SkillWindow {
            states: t.states[r.clone()].to_vec(),
            actions: t.actions[r].iter().map(|a| a.to_vec()).collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, data: &DemoDataset, batch: usize, rng: &mut R) -> Vec<SkillWindow> {
        (0..batch)
            .map(|_| {
                let (traj, off) = self.locate(rng.gen_range(0..self.total));
                self.window(data, traj, off)
            })
            .collect()
    }
}

pub fn sample_windows<R: Rng + ?Sized>(data: &DemoDataset, horizon: usize, batch: usize, rng: &mut R) -> Result<Vec<SkillWindow>> {
    Ok(WindowSampler::new(data, horizon)?.sample(data, batch, rng))
}
