//! Momentum contrastive autoencoders (MoCA) for matching an autoencoder's
//! latent distribution to the uniform distribution on the unit hypersphere,
//! together with MMD, sliced-Wasserstein and Sinkhorn matching baselines and
//! the diagnostics used to compare them.

pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod prior;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Tape, Tensor, Var};
