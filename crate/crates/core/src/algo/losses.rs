use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::motion::MirrorSpec;
use crate::nn::Mlp;

/// Clipped surrogate for one sample: `−min(ρA, clip(ρ, 1−ε, 1+ε) A)`.
pub fn clipped_surrogate(log_prob_new: f64, log_prob_old: f64, advantage: f64, clip: f64) -> f64 {
    let ratio = (log_prob_new - log_prob_old).exp();
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
    -(ratio * advantage).min(clipped * advantage)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLoss {
    /// Batch mean of the clipped surrogate.
    pub loss: f64,
    /// `∂loss/∂log_prob_new` per sample (already divided by the batch size).
    pub grad_log_prob: Vec<f64>,
    pub clip_fraction: f64,
    /// Mean of `log_prob_old − log_prob_new`.
    pub approx_kl: f64,
}

pub fn policy_loss(log_prob_new: &[f64], log_prob_old: &[f64], advantages: &[f64], clip: f64) -> Result<PolicyLoss> {
    let n = log_prob_new.len();
    check_len("policy_loss old log-probs", n, log_prob_old.len())?;
    check_len("policy_loss advantages", n, advantages.len())?;
    if n == 0 {
        return Ok(PolicyLoss {
            loss: 0.0,
            grad_log_prob: Vec::new(),
            clip_fraction: 0.0,
            approx_kl: 0.0,
        });
    }
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut clipped = 0usize;
    let mut kl = 0.0;
    let mut grad = Vec::with_capacity(n);
    for k in 0..n {
        let ratio = (log_prob_new[k] - log_prob_old[k]).exp();
        let a = advantages[k];
        let unclipped = ratio * a;
        let bounded = ratio.clamp(1.0 - clip, 1.0 + clip) * a;
        if (ratio - 1.0).abs() > clip {
            clipped += 1;
        }
        kl += log_prob_old[k] - log_prob_new[k];
        if unclipped <= bounded {
            loss -= unclipped;
            grad.push(-unclipped * scale);
        } else {
            loss -= bounded;
            grad.push(0.0);
        }
    }
    Ok(PolicyLoss {
        loss: loss * scale,
        grad_log_prob: grad,
        clip_fraction: clipped as f64 * scale,
        approx_kl: kl * scale,
    })
}

/// Mirrors every row of `obs`.
pub fn mirror_batch(obs: ArrayView2<'_, f64>, spec: &MirrorSpec) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(obs.dim());
    for (src, mut dst) in obs.rows().into_iter().zip(out.rows_mut()) {
        let m = spec.mirror_observation(&src.to_vec())?;
        dst.as_slice_mut().unwrap().copy_from_slice(&m);
    }
    Ok(out)
}

/// `mean_b ‖μ(s_b) − Φ_a(μ(Φ_s s_b))‖²` on policy means.
pub fn mirror_loss(policy: &Mlp, obs: ArrayView2<'_, f64>, spec: &MirrorSpec) -> Result<f64> {
    let mu = policy.predict(obs)?;
    let mu_sym = policy.predict(mirror_batch(obs, spec)?.view())?;
    let mut total = 0.0;
    for (a, b) in mu.rows().into_iter().zip(mu_sym.rows()) {
        let back = spec.mirror_action(&b.to_vec())?;
        total += a.iter().zip(&back).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(total / obs.nrows().max(1) as f64)
}

/// Mirror loss scaled by `weight`; accumulates its parameter gradients into
/// `policy` and returns the unscaled loss.
pub fn mirror_loss_backward(policy: &mut Mlp, obs: ArrayView2<'_, f64>, spec: &MirrorSpec, weight: f64) -> Result<f64> {
    let mirrored = mirror_batch(obs, spec)?;
    let direct = policy.forward(obs)?;
    let sym = policy.forward(mirrored.view())?;
    let n = obs.nrows().max(1) as f64;
    let dim = policy.output_dim();
    let mut g_direct = Array2::zeros((obs.nrows(), dim));
    let mut g_sym = Array2::zeros((obs.nrows(), dim));
    let mut total = 0.0;
    for b in 0..obs.nrows() {
        let back = spec.mirror_action(&sym.output().row(b).to_vec())?;
        for i in 0..dim {
            let diff = direct.output()[(b, i)] - back[i];
            total += diff * diff;
            let g = 2.0 * weight * diff / n;
            g_direct[(b, i)] += g;
            // back[i] = sign[i] · μ_sym[perm[i]]
            g_sym[(b, spec.action_perm[i])] -= g * spec.action_sign[i];
        }
    }
    policy.backward(&direct, g_direct.view())?;
    policy.backward(&sym, g_sym.view())?;
    Ok(total / n)
}

/// Asymmetrically weighted squared distributional TD error,
/// `1/(2M) Σ_i Σ_j |k̂_i − 𝟙(σ_ij < 0)| σ_ij²` with `σ_ij = target_j − pred_i`.
pub fn quantile_value_loss(pred: &[f64], targets: &[f64], midpoints: &[f64]) -> f64 {
    let m = pred.len() as f64;
    let mut total = 0.0;
    for (d, k) in pred.iter().zip(midpoints) {
        for t in targets {
            let s = t - d;
            let w = (k - if s < 0.0 { 1.0 } else { 0.0 }).abs();
            total += w * s * s;
        }
    }
    total / (2.0 * m)
}

pub fn quantile_value_loss_grad(pred: &[f64], targets: &[f64], midpoints: &[f64], out: &mut [f64]) {
    let m = pred.len() as f64;
    for ((g, d), k) in out.iter_mut().zip(pred).zip(midpoints) {
        *g = targets
            .iter()
            .map(|t| {
                let s = t - d;
                let w = (k - if s < 0.0 { 1.0 } else { 0.0 }).abs();
                -w * s
            })
            .sum::<f64>()
            / m;
    }
}

/// Quantile-regression (pinball) loss over the same pairs,
/// `1/M² Σ_i Σ_j |k̂_i − 𝟙(σ_ij < 0)| |σ_ij|`; its minimizer is the true
/// `k̂_i`-quantile of the target distribution.
pub fn quantile_regression_loss(pred: &[f64], targets: &[f64], midpoints: &[f64]) -> f64 {
    let norm = (pred.len() * targets.len()) as f64;
    let mut total = 0.0;
    for (d, k) in pred.iter().zip(midpoints) {
        for t in targets {
            let s = t - d;
            let w = (k - if s < 0.0 { 1.0 } else { 0.0 }).abs();
            total += w * s.abs();
        }
    }
    total / norm
}

pub fn quantile_regression_loss_grad(pred: &[f64], targets: &[f64], midpoints: &[f64], out: &mut [f64]) {
    let norm = (pred.len() * targets.len()) as f64;
    for ((g, d), k) in out.iter_mut().zip(pred).zip(midpoints) {
        *g = targets
            .iter()
            .map(|t| {
                let s = t - d;
                if s < 0.0 {
                    1.0 - k
                } else if s > 0.0 {
                    -k
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / norm;
    }
}

/// Which regression the distributional critic minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueLoss {
    /// Pinball loss: converges to the quantiles of the return distribution.
    #[default]
    Quantile,
    /// Squared pairwise form; converges to expectiles.
    Squared,
}

impl ValueLoss {
    pub fn loss(self, pred: &[f64], targets: &[f64], midpoints: &[f64]) -> f64 {
        match self {
            ValueLoss::Quantile => quantile_regression_loss(pred, targets, midpoints),
            ValueLoss::Squared => quantile_value_loss(pred, targets, midpoints),
        }
    }

    pub fn grad(self, pred: &[f64], targets: &[f64], midpoints: &[f64], out: &mut [f64]) {
        match self {
            ValueLoss::Quantile => quantile_regression_loss_grad(pred, targets, midpoints, out),
            ValueLoss::Squared => quantile_value_loss_grad(pred, targets, midpoints, out),
        }
    }
}
