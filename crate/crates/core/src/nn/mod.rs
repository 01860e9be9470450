//! Feed-forward networks with hand-written reverse-mode gradients.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod policy;
pub mod quantile;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use mlp::{Activation, Mlp, MlpCache};
pub use policy::{GaussianPolicy, LOG_STD};
pub use quantile::{quantile_values, value_mean, QuantileCritic, QuantileLevels};
