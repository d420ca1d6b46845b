//! Stage 1: a skill latent space learned from demonstrations.
//!
//! A [`SkillModel`] bundles three networks: an encoder from an H-step window
//! to a Gaussian over the latent skill `z`, a decoder from
//! `(state, one-hot phase, z)` to a pre-squash action mean, and a
//! state-conditioned skill prior. The decoder mean plus a fixed standard
//! deviation `σ_â` forms the action prior used downstream.

mod model;
mod train;
mod window;

pub(crate) use model::head_to_gaussian;
pub use model::{action_prior, decoder_input, phase_one_hot, SkillModel, SkillModelConfig, SKILL_MODEL_VERSION};
pub use train::{pretrain, reconstruction_mse, vae_loss, vae_loss_with, EpochReport, PretrainConfig, Pretrainer, VaeLossReport};
pub use window::{sample_windows, SkillWindow, WindowSampler};

use crate::numgrad::NumError;

#[derive(Debug, thiserror::Error)]
pub enum SkillError {
    #[error("no trajectory is at least {horizon} steps long")]
    NoWindows { horizon: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("phase {k} outside 0..{horizon}")]
    PhaseOutOfRange { k: usize, horizon: usize },
    #[error("{what}: expected width {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Divergence { epoch: usize, step: usize, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T> = std::result::Result<T, SkillError>;
