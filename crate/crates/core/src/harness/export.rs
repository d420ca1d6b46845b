//! Cross-seed aggregation of metrics files into one table per experiment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{HarnessError, Result, RunConfig};
use crate::hrl::{MetricsRow, METRICS_HEADER};

/// The reward columns of one metrics file.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsSeries {
    pub source: PathBuf,
    /// From a `train.config` beside the file, else `"default"`.
    pub experiment: String,
    pub env_steps: Vec<usize>,
    pub episode_reward: Vec<f64>,
    pub eval_reward: Vec<f64>,
}

impl MetricsSeries {
    /// Logging interval, inferred from the first two rows.
    pub fn interval(&self) -> Option<usize> {
        match self.env_steps.as_slice() {
            [] => None,
            [a] => Some(*a),
            [a, b, ..] => Some(b - a),
        }
    }

    /// Index of the last row logged at or before `step`.
    fn at(&self, step: usize) -> Option<usize> {
        self.env_steps.partition_point(|&s| s <= step).checked_sub(1)
    }
}

pub fn read_metrics(path: &Path) -> Result<MetricsSeries> {
    let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(HarnessError::Config(format!("{}: not a metrics file", path.display())));
    }
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(MetricsRow::parse)
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    if rows.windows(2).any(|w| w[1].env_steps <= w[0].env_steps) {
        return Err(HarnessError::Config(format!("{}: env_steps must increase", path.display())));
    }
    let config = path.parent().map(|d| d.join("train.config")).filter(|p| p.exists());
    let experiment = match config {
        Some(p) => RunConfig::from_text(&fs::read_to_string(&p).map_err(HarnessError::io(&p))?)?.experiment,
        None => "default".to_string(),
    };
    Ok(MetricsSeries {
        source: path.to_path_buf(),
        experiment,
        env_steps: rows.iter().map(|r| r.env_steps).collect(),
        episode_reward: rows.iter().map(|r| r.episode_reward_mean).collect(),
        eval_reward: rows.iter().map(|r| r.eval_reward).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExportRow {
    pub env_steps: usize,
    pub episode_reward_mean: f64,
    pub episode_reward_std: f64,
    pub eval_reward_mean: f64,
    pub eval_reward_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExportTable {
    pub experiment: String,
    pub seeds: usize,
    /// Grid spacing in environment steps.
    pub interval: usize,
    pub rows: Vec<ExportRow>,
}

/// Mean and sample standard deviation (zero for a single value).
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aligns `group` on a common step grid and summarizes each step across
/// series. Differing logging intervals are resampled to the coarsest one
/// (each series contributes its latest row at or before the grid step) and
/// reported in the returned warnings.
pub fn aggregate(group: &[MetricsSeries]) -> Result<(ExportTable, Vec<String>)> {
    let first = group.first().ok_or_else(|| HarnessError::Config("nothing to export".into()))?;
    let mut intervals = Vec::with_capacity(group.len());
    for s in group {
        intervals.push(s.interval().ok_or_else(|| HarnessError::Config(format!("{} has no rows", s.source.display())))?);
    }
    let coarsest = *intervals.iter().max().expect("non-empty");
    let mut warnings = Vec::new();
    if intervals.iter().any(|&i| i != coarsest) {
        warnings.push(format!(
            "experiment {}: logging intervals {:?} differ; resampled to every {coarsest} steps",
            first.experiment, intervals
        ));
    }
    let end = group.iter().map(|s| *s.env_steps.last().expect("non-empty")).min().expect("non-empty");
    let mut rows = Vec::new();
    for step in (coarsest..=end).step_by(coarsest) {
        let idx: Option<Vec<usize>> = group.iter().map(|s| s.at(step)).collect();
        let Some(idx) = idx else { continue };
        let pick = |f: fn(&MetricsSeries) -> &[f64]| -> Vec<f64> { group.iter().zip(&idx).map(|(s, &i)| f(s)[i]).collect() };
        let (episode_reward_mean, episode_reward_std) = mean_std(&pick(|s| &s.episode_reward));
        let (eval_reward_mean, eval_reward_std) = mean_std(&pick(|s| &s.eval_reward));
        rows.push(ExportRow { env_steps: step, episode_reward_mean, episode_reward_std, eval_reward_mean, eval_reward_std });
    }
    let table = ExportTable { experiment: first.experiment.clone(), seeds: group.len(), interval: coarsest, rows };
    Ok((table, warnings))
}

pub const EXPORT_HEADER: &str = "env_steps,episode_reward_mean,episode_reward_std,eval_reward_mean,eval_reward_std,seeds";

pub fn write_table(path: &Path, t: &ExportTable) -> Result<()> {
    let mut s = String::from(EXPORT_HEADER);
    s.push('\n');
    for r in &t.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.env_steps, r.episode_reward_mean, r.episode_reward_std, r.eval_reward_mean, r.eval_reward_std, t.seeds
        );
    }
    fs::write(path, s).map_err(HarnessError::io(path))
}
