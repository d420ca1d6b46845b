//! Hierarchical reinforcement learning with learned skill priors.
//!
//! Stage 1 ([`skillspace`]) embeds fixed-horizon action sequences from
//! demonstrations into a latent skill space and learns a state-conditioned
//! skill prior plus a skill decoder. Stage 2 ([`hrl`]) fine-tunes a
//! high-level skill-selection policy and a low-level action policy together,
//! each with prior-regularized soft actor-critic on its own augmented MDP.
//! The [`oracle`] module checks the underlying value-function identities
//! exactly on small tabular problems.
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

pub mod env;
pub mod harness;
pub mod hrl;
pub mod numgrad;
pub mod oracle;
pub mod rng;
pub mod skillspace;
