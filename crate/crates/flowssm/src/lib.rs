//! Conditional normalizing flows with prescribed linear-Gaussian latent
//! dynamics, and a threshold-free anomaly detector built on multivariate
//! Kolmogorov-Smirnov compliance testing of whitened latent trajectories.
//!
//! The crate is organized around the pipeline:
//!
//! 1. [`synth`] generates multivariate sinusoid series with labeled
//!    amplitude / frequency / noise anomalies.
//! 2. [`flow`] + [`dynamics`] define the model: a RealNVP-style conditional
//!    flow mapping each observation (given a context window) to a latent
//!    whose mean follows `mu_t = A mu_{t-1} + b` with identity covariance.
//! 3. [`train`] fits flow and dynamics jointly by negative log-likelihood,
//!    sequentially or in mini-batches over time.
//! 4. [`gof`] + [`detector`] test whitened latent windows against
//!    `N(0, I)`, score timesteps, and report the FIT training diagnostic.
//! 5. [`metrics`] evaluates scores against labels (AUC / VUS / F1).
//! 6. [`cli`] binds everything behind file formats and subcommands.
//!
//! See the crate examples for runnable end-to-end walkthroughs.

pub mod cli;
pub mod detector;
pub mod dynamics;
pub mod error;
pub mod flow;
pub mod gof;
pub mod metrics;
pub mod nn;
pub mod series;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
