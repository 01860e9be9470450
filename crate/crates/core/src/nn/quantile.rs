use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp, MlpCache};
use crate::error::{check_len, Error, Result};

/// Cumulative probability levels `k_0 ≤ … ≤ k_{M−1}` with `k_M := 1`. Each
/// quantile carries the dirac weight `k_{i+1} − k_i` and is regressed at the
/// midpoint level `(k_i + k_{i+1}) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileLevels {
    levels: Vec<f64>,
    weights: Vec<f64>,
    midpoints: Vec<f64>,
}

impl QuantileLevels {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidModel("quantile head needs at least one level".into()));
        }
        if levels.iter().any(|k| !(0.0..=1.0).contains(k)) || levels.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidModel(format!("quantile levels must be non-decreasing in [0, 1]: {levels:?}")));
        }
        let next = |i: usize| levels.get(i + 1).copied().unwrap_or(1.0);
        let weights = (0..levels.len()).map(|i| next(i) - levels[i]).collect();
        let midpoints = (0..levels.len()).map(|i| 0.5 * (levels[i] + next(i))).collect();
        Ok(Self {
            levels,
            weights,
            midpoints,
        })
    }

    /// `k_i = i / M`: equal weights `1/M`, midpoints `(2i + 1) / 2M`.
    pub fn uniform(m: usize) -> Result<Self> {
        Self::new((0..m).map(|i| i as f64 / m as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `d_0 = raw_0`, `d_i = d_{i−1} + softplus(raw_i)`: non-decreasing by construction.
pub fn quantile_values(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut acc = 0.0;
    for (i, &r) in raw.iter().enumerate() {
        acc += if i == 0 { r } else { softplus(r) };
        out.push(acc);
    }
    out
}

/// Maps `∂L/∂d` back to `∂L/∂raw`.
pub fn quantile_values_backward(raw: &[f64], upstream: &[f64], out: &mut [f64]) -> Result<()> {
    check_len("quantile upstream", raw.len(), upstream.len())?;
    check_len("quantile gradient", raw.len(), out.len())?;
    let mut tail = 0.0;
    for i in (0..raw.len()).rev() {
        tail += upstream[i];
        out[i] = if i == 0 { tail } else { tail * sigmoid(raw[i]) };
    }
    Ok(())
}

/// `Σ_i (k_{i+1} − k_i) d_i`.
pub fn value_mean(quantiles: &[f64], levels: &QuantileLevels) -> f64 {
    quantiles.iter().zip(levels.weights()).map(|(d, w)| d * w).sum()
}

/// Critic network: an MLP trunk whose outputs pass through the non-crossing
/// quantile map. A single level degenerates to a scalar value function.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCritic {
    pub net: Mlp,
    pub levels: QuantileLevels,
}

/// Forward intermediates for [`QuantileCritic::backward`].
pub struct CriticCache {
    mlp: MlpCache,
    /// Quantile values, one row per sample.
    pub quantiles: Array2<f64>,
}

impl QuantileCritic {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], levels: QuantileLevels, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(levels.len());
        Ok(Self {
            net: Mlp::new(&sizes, Activation::Elu, Activation::Identity, 1.0, rng)?,
            levels,
        })
    }

    pub fn from_parts(net: Mlp, levels: QuantileLevels) -> Result<Self> {
        check_len("critic output", levels.len(), net.output_dim())?;
        Ok(Self { net, levels })
    }

    pub fn num_quantiles(&self) -> usize {
        self.levels.len()
    }

    fn map_rows(raw: &Array2<f64>) -> Array2<f64> {
        let mut out = raw.clone();
        for mut row in out.rows_mut() {
            let q = quantile_values(row.as_slice().unwrap());
            row.as_slice_mut().unwrap().copy_from_slice(&q);
        }
        out
    }

    pub fn quantiles(&self, obs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(Self::map_rows(&self.net.predict(obs)?))
    }

    pub fn values(&self, obs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let q = self.quantiles(obs)?;
        Ok(q.rows().into_iter().map(|r| value_mean(r.as_slice().unwrap(), &self.levels)).collect())
    }

    pub fn forward(&self, obs: ArrayView2<'_, f64>) -> Result<CriticCache> {
        let mlp = self.net.forward(obs)?;
        let quantiles = Self::map_rows(mlp.output());
        Ok(CriticCache { mlp, quantiles })
    }

    /// Accumulates parameter gradients given `∂L/∂quantiles`.
    pub fn backward(&mut self, cache: &CriticCache, upstream: ArrayView2<'_, f64>) -> Result<()> {
        let raw = cache.mlp.output();
        let mut g = Array2::zeros(raw.dim());
        for ((r, u), mut out) in raw.rows().into_iter().zip(upstream.rows()).zip(g.rows_mut()) {
            quantile_values_backward(r.as_slice().unwrap(), &u.to_vec(), out.as_slice_mut().unwrap())?;
        }
        self.net.backward(&cache.mlp, g.view())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_distribution_mean() {
        let levels = QuantileLevels::uniform(32).unwrap();
        assert!((value_mean(&[2.5; 32], &levels) - 2.5).abs() < 1e-12);
        let levels = QuantileLevels::uniform(2).unwrap();
        assert_eq!(value_mean(&[0.0, 10.0], &levels), 5.0);
    }

    #[test]
    fn weights_sum_to_one() {
        for levels in [QuantileLevels::uniform(32).unwrap(), QuantileLevels::new(vec![0.0, 0.1, 0.5, 0.9]).unwrap()] {
            assert!((levels.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        let u = QuantileLevels::uniform(4).unwrap();
        assert_eq!(u.midpoints(), &[0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn rejects_bad_levels() {
        assert!(QuantileLevels::new(vec![]).is_err());
        assert!(QuantileLevels::new(vec![0.5, 0.2]).is_err());
        assert!(QuantileLevels::new(vec![-0.1, 0.2]).is_err());
    }

    #[test]
    fn random_head_never_crosses() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let critic = QuantileCritic::new(5, &[16, 16], QuantileLevels::uniform(32).unwrap(), &mut rng).unwrap();
        let obs = Array2::from_shape_fn((10_000, 5), |_| 20.0 * (rng.random::<f64>() - 0.5));
        let q = critic.quantiles(obs.view()).unwrap();
        let min_gap = q
            .rows()
            .into_iter()
            .flat_map(|r| r.to_vec().windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>())
            .fold(f64::INFINITY, f64::min);
        assert!(min_gap >= 0.0);
    }

    #[test]
    fn mean_shift_is_exact() {
        let levels = QuantileLevels::uniform(4).unwrap();
        let d = [0.5, 1.0, 2.0, 4.0];
        let shifted: Vec<f64> = d.iter().map(|v| v + 3.0).collect();
        assert_eq!(value_mean(&shifted, &levels), value_mean(&d, &levels) + 3.0);
    }

    #[test]
    fn quantile_map_gradient_matches_finite_differences() {
        let raw = [0.3, -1.2, 0.8, 2.5, -4.0];
        let c = [0.7, -0.3, 1.1, 0.2, -0.9];
        let f = |r: &[f64]| quantile_values(r).iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        let mut g = [0.0; 5];
        quantile_values_backward(&raw, &c, &mut g).unwrap();
        let h = 1e-5;
        for k in 0..5 {
            let mut up = raw;
            up[k] += h;
            let mut dn = raw;
            dn[k] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!((fd - g[k]).abs() / fd.abs().max(1e-8) < 1e-6, "{k}");
        }
    }

    #[test]
    fn single_level_is_a_scalar_critic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let critic = QuantileCritic::new(3, &[4], QuantileLevels::uniform(1).unwrap(), &mut rng).unwrap();
        let obs = Array2::from_shape_vec((1, 3), vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(critic.values(obs.view()).unwrap()[0], critic.net.predict(obs.view()).unwrap()[(0, 0)]);
    }
}
