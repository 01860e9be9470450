//! Simple domain randomization: episodic random force injection (per-step
//! random torques or a per-episode constant offset, chosen by a Bernoulli
//! mask) plus a first-order delay on the commanded joint targets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sim::RobotModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    /// One delay coefficient per episode.
    #[default]
    Episode,
    /// A fresh delay coefficient every control step.
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RndConfig {
    /// Perturbation magnitude as a fraction of the torque limits, in [0, 1).
    pub alpha: f64,
    pub enable_erfi: bool,
    pub enable_delay: bool,
    /// Probability that an episode uses the constant offset instead of
    /// per-step injection.
    pub mask_probability: f64,
    pub beta_mode: BetaMode,
}

impl Default for RndConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            enable_erfi: true,
            enable_delay: true,
            mask_probability: 0.5,
            beta_mode: BetaMode::Episode,
        }
    }
}

impl RndConfig {
    pub fn disabled() -> Self {
        Self {
            enable_erfi: false,
            enable_delay: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(format!("alpha must lie in [0, 1), got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.mask_probability) {
            return Err(format!("mask_probability must lie in [0, 1], got {}", self.mask_probability));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbState {
    /// `true` selects the constant offset for this episode.
    pub use_offset: bool,
    /// Episode-constant torque offset, N·m.
    pub offset: Vec<f64>,
    /// Delay blend coefficient in [0, 1].
    pub beta: f64,
    /// Last commanded joint target, rad.
    pub target_prev: Vec<f64>,
}

impl PerturbState {
    /// No perturbation: offset unused, β = 1.
    pub fn neutral(nj: usize) -> Self {
        Self {
            use_offset: false,
            offset: vec![0.0; nj],
            beta: 1.0,
            target_prev: vec![0.0; nj],
        }
    }
}

fn symmetric_uniform<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> f64 {
    bound * (2.0 * rng.random::<f64>() - 1.0)
}

/// Draws the per-episode mask, actuation offset and delay coefficient.
pub fn sample_episode<R: Rng + ?Sized>(cfg: &RndConfig, model: &RobotModel, rng: &mut R) -> PerturbState {
    let use_offset = rng.random::<f64>() < cfg.mask_probability;
    let offset = model
        .joints
        .iter()
        .map(|j| {
            let v = symmetric_uniform(rng, cfg.alpha * j.torque_limit);
            if cfg.alpha == 0.0 {
                0.0
            } else {
                v
            }
        })
        .collect();
    let beta = rng.random::<f64>();
    PerturbState {
        use_offset,
        offset,
        beta,
        target_prev: vec![0.0; model.num_joints()],
    }
}

/// Adds either the episode offset or a fresh per-substep random torque, then
/// clamps to the torque limits.
pub fn perturb_torque<R: Rng + ?Sized>(torque: &[f64], p: &PerturbState, cfg: &RndConfig, model: &RobotModel, rng: &mut R) -> Vec<f64> {
    if !cfg.enable_erfi {
        return torque.to_vec();
    }
    model
        .joints
        .iter()
        .enumerate()
        .map(|(j, joint)| {
            let extra = if p.use_offset {
                p.offset[j]
            } else {
                symmetric_uniform(rng, cfg.alpha * joint.torque_limit)
            };
            (torque[j] + extra).clamp(-joint.torque_limit, joint.torque_limit)
        })
        .collect()
}

/// `q_tgt = (1 − β) q_tgt_prev + β a`, stored back into the state.
pub fn delay_action(p: &mut PerturbState, action: &[f64]) -> Vec<f64> {
    let beta = p.beta;
    let out: Vec<f64> = p
        .target_prev
        .iter()
        .zip(action)
        .map(|(prev, a)| (1.0 - beta) * prev + beta * a)
        .collect();
    p.target_prev.clone_from(&out);
    out
}

/// Control-step entry point honoring the enable flag and β draw mode.
pub fn delayed_target<R: Rng + ?Sized>(p: &mut PerturbState, action: &[f64], cfg: &RndConfig, rng: &mut R) -> Vec<f64> {
    if !cfg.enable_delay {
        p.target_prev.copy_from_slice(action);
        return action.to_vec();
    }
    if cfg.beta_mode == BetaMode::Step {
        p.beta = rng.random::<f64>();
    }
    delay_action(p, action)
}
