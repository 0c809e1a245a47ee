//! TMC marginal-likelihood estimation for directed models.
//!
//! Per-latent samples are combined over every index combination by
//! log-domain tensor contraction, so the average over exponentially many
//! joint samples costs only polynomial time.

pub mod estimators;
pub mod factorgraph;
pub mod gradients;
pub mod logtensor;
pub mod models;
pub mod rng;
