//! Planar walker simulation and distributional PPO for tracking reference
//! motions under domain randomization.

pub mod ablation;
pub mod algo;
pub mod config;
pub mod error;
pub mod motion;
pub mod nn;
pub mod randomization;
pub mod reward;
pub mod runtime;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
