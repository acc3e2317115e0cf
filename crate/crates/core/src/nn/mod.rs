//! MLP encoders/decoders, Adam, EMA updates and checkpoint persistence.

mod adam;
pub mod checkpoint;
mod mlp;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use mlp::{bias_name, weight_name, Activation, BoundParams, Mlp, MlpSpec};
pub use params::{ema_update, ParamSet};
