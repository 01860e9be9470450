//! PPO with a mirror-symmetry term and a quantile critic.

pub mod buffer;
pub mod gae;
pub mod losses;
pub mod ppo;

pub use buffer::{EpisodeSummary, RolloutBuffer, Transition};
pub use gae::{compute_gae, normalize_advantages, Done};
pub use losses::{mirror_loss, policy_loss, quantile_regression_loss, quantile_value_loss, ValueLoss};
pub use ppo::{prepare, update, CriticKind, Learner, PreparedBatch, TrainConfig, UpdateStats};
