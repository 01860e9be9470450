//! Environment stepping, rollout collection and policy evaluation.

pub mod actions;
pub mod env;
pub mod eval;
pub mod observation;
pub mod rollout;

pub use actions::{compose_action, ActionWeights};
pub use env::{Disturbance, Env, EnvConfig, Push, StepOutcome, CONTROL_HZ, SUBSTEPS};
pub use eval::{evaluate, sweep, sweep_csv, EvalReport, SweepKind, SweepPoint};
pub use observation::{build_observation, mirror_spec, ObsLayout};
pub use rollout::{collect, VecEnv};
