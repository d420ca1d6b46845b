//! Reverse-mode differentiation, small feed-forward networks, diagonal
//! Gaussians and the Adam optimizer shared by every learner in the crate.

mod archive;
mod gaussian;
mod gradcheck;
mod graph;
mod mlp;
mod params;
mod tensor;

pub use archive::{TensorArchive, ARCHIVE_VERSION};
pub use gaussian::{gaussian_kl, rsample, squash, DiagGaussian, GaussianVar, LOG_STD_MAX, LOG_STD_MIN};
pub use gradcheck::{check_case, run_gradient_suite, GradCheckCase, GradCheckReport, LossKind};
pub use graph::{BatchStats, Gradients, Graph, Var, BN_EPS};
pub use mlp::{Activation, Mlp, MlpSpec, LEAKY_SLOPE};
pub use params::{adam_step, Adam, Bound, Param, ParameterSet};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumError {
    #[error("invalid tensor shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("layer {layer}: expected input width {expected}, got {got}")]
    LayerShape { layer: usize, expected: usize, got: usize },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("missing parameter {0}")]
    MissingParameter(String),
    #[error("archive: {0}")]
    Archive(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
