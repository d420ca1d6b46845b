//! Command-line plumbing: run configuration, artifact manifests and the
//! five subcommands (`demo-gen`, `pretrain`, `train`, `verify`, `export`).
//!
//! Everything here validates its configuration before touching the
//! filesystem, and every file a command writes is listed, with its SHA-256
//! digest, in a manifest next to it.

mod commands;
mod config;
mod envs;
mod export;
mod manifest;
mod pipeline;

pub use commands::{cmd_demo_gen, cmd_export, cmd_pretrain, cmd_train, cmd_verify, TrainOutcome, VerifyOptions};
pub use config::{parse_assignment, parse_text, EnvKind, RunConfig, KEYS};
pub use envs::AnyEnv;
pub use export::{aggregate, read_metrics, write_table, ExportTable, MetricsSeries};
pub use manifest::{sha256_file, ManifestEntry, RunManifest};
pub use pipeline::{generate_dataset, make_trainer, pretrain_config};

use std::path::{Path, PathBuf};

use crate::env::EnvError;
use crate::hrl::HrlError;
use crate::numgrad::NumError;
use crate::oracle::OracleError;
use crate::skillspace::SkillError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Bad configuration or arguments, detected before any work starts.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A verification or consistency check failed.
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Skill(#[from] SkillError),
    #[error(transparent)]
    Hrl(#[from] HrlError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl HarnessError {
    /// Process exit status: 1 validation, 2 runtime, 3 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Verification(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| HarnessError::Io { path: path.to_path_buf(), source }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
