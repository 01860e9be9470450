use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{Activation, Mlp};
use crate::error::{check_len, Result};

/// Fixed exploration scale, `σ = exp(−2.9) ≈ 0.055` rad.
pub const LOG_STD: f64 = -2.9;

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_7;

/// Diagonal Gaussian policy whose mean is an MLP of the observation and whose
/// standard deviation is a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub log_std: f64,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], action_dim: usize, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        Ok(Self {
            net: Mlp::new(&sizes, Activation::Elu, Activation::Identity, 0.01, rng)?,
            log_std: LOG_STD,
        })
    }

    pub fn from_net(net: Mlp) -> Self {
        Self { net, log_std: LOG_STD }
    }

    pub fn std(&self) -> f64 {
        self.log_std.exp()
    }

    pub fn action_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn means(&self, obs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.net.predict(obs)
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.net.predict_one(obs)
    }

    /// `mean + σ ε` with `ε ~ N(0, I)`, and its log density.
    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
        let sigma = self.std();
        let action: Vec<f64> = mean.iter().map(|m| m + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        let lp = self.log_prob(mean, &action);
        (action, lp)
    }

    pub fn log_prob(&self, mean: &[f64], action: &[f64]) -> f64 {
        gaussian_log_prob(mean, action, self.log_std)
    }

    /// Log density of the mean itself.
    pub fn peak_log_prob(&self) -> f64 {
        -(self.action_dim() as f64) * (HALF_LN_TAU + self.log_std)
    }
}

pub fn gaussian_log_prob(mean: &[f64], action: &[f64], log_std: f64) -> f64 {
    let inv_var = (-2.0 * log_std).exp();
    mean.iter()
        .zip(action)
        .map(|(m, a)| -0.5 * (a - m) * (a - m) * inv_var - log_std - HALF_LN_TAU)
        .sum()
}

/// `∂ log π(a) / ∂ mean = (a − mean) / σ²`.
pub fn log_prob_grad_mean(mean: &[f64], action: &[f64], log_std: f64, out: &mut [f64]) -> Result<()> {
    check_len("log_prob gradient", mean.len(), out.len())?;
    let inv_var = (-2.0 * log_std).exp();
    for ((o, m), a) in out.iter_mut().zip(mean).zip(action) {
        *o = (a - m) * inv_var;
    }
    Ok(())
}
