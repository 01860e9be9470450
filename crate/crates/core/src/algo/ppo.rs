use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::gae::{compute_gae, normalize_advantages, Done};
use super::losses::{mirror_loss_backward, policy_loss, ValueLoss};
use crate::error::{Error, Result};
use crate::motion::MirrorSpec;
use crate::nn::mlp::gather_rows;
use crate::nn::policy::log_prob_grad_mean;
use crate::nn::{Adam, AdamConfig, GaussianPolicy, QuantileCritic, QuantileLevels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticKind {
    /// Quantile critic trained on distributional TD targets.
    #[default]
    Distributional,
    /// Single-output critic regressed on GAE returns (plain PPO).
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub mirror_weight: f64,
    pub num_envs: usize,
    pub horizon: usize,
    /// Total control steps to collect across all environments.
    pub total_steps: usize,
    pub seed: u64,
    pub critic: CriticKind,
    pub value_loss: ValueLoss,
    pub quantiles: usize,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 8,
            minibatch: 1024,
            lr: 1e-4,
            mirror_weight: 10.0,
            num_envs: 256,
            horizon: 40,
            total_steps: 2_000_000,
            seed: 0,
            critic: CriticKind::Distributional,
            value_loss: ValueLoss::Quantile,
            quantiles: 32,
            policy_hidden: vec![256, 256],
            value_hidden: vec![256, 256],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Config {
                field: field.into(),
                message,
            })
        };
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", format!("must lie in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda", format!("must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.clip > 0.0) {
            return bad("clip", format!("must be positive, got {}", self.clip));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("must be non-negative, got {}", self.lr));
        }
        if !(self.mirror_weight >= 0.0) {
            return bad("mirror_weight", format!("must be non-negative, got {}", self.mirror_weight));
        }
        for (field, v) in [
            ("epochs", self.epochs),
            ("minibatch", self.minibatch),
            ("num_envs", self.num_envs),
            ("horizon", self.horizon),
            ("quantiles", self.quantiles),
        ] {
            if v == 0 {
                return bad(field, "must be at least 1".into());
            }
        }
        Ok(())
    }

    /// Quantile count actually used by the critic.
    pub fn critic_outputs(&self) -> usize {
        match self.critic {
            CriticKind::Distributional => self.quantiles,
            CriticKind::Scalar => 1,
        }
    }
}

/// Policy and critic with their optimizers.
#[derive(Debug, Clone)]
pub struct Learner {
    pub policy: GaussianPolicy,
    pub critic: QuantileCritic,
    pub critic_kind: CriticKind,
    pub mirror: MirrorSpec,
    policy_opt: Adam,
    critic_opt: Adam,
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, mirror: MirrorSpec, cfg: &TrainConfig, rng: &mut R) -> Result<Self> {
        let policy = GaussianPolicy::new(obs_dim, &cfg.policy_hidden, action_dim, rng)?;
        let levels = QuantileLevels::uniform(cfg.critic_outputs())?;
        let critic = QuantileCritic::new(obs_dim, &cfg.value_hidden, levels, rng)?;
        Ok(Self::from_parts(policy, critic, cfg.critic, mirror, cfg.lr))
    }

    pub fn from_parts(policy: GaussianPolicy, critic: QuantileCritic, critic_kind: CriticKind, mirror: MirrorSpec, lr: f64) -> Self {
        let opt = AdamConfig {
            lr,
            ..AdamConfig::default()
        };
        Self {
            policy_opt: Adam::new(policy.net.num_params(), opt),
            critic_opt: Adam::new(critic.net.num_params(), opt),
            policy,
            critic,
            critic_kind,
            mirror,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.policy_opt.config.lr = lr;
        self.critic_opt.config.lr = lr;
    }
}

/// Advantages and critic targets derived from a full buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedBatch {
    /// Value means of the stored observations.
    pub values: Vec<f64>,
    /// Normalized advantages.
    pub advantages: Vec<f64>,
    /// GAE value targets `A + V` (before normalization).
    pub returns: Vec<f64>,
    /// Critic regression targets, `target_width` per sample.
    pub targets: Vec<f64>,
    pub target_width: usize,
}

/// Evaluates the critic on the buffer, runs GAE per environment and freezes
/// the critic targets. Distributional targets are `r + γ d_j(s')` (just `r`
/// at terminal steps); scalar targets are the GAE returns.
pub fn prepare(buffer: &RolloutBuffer, critic: &QuantileCritic, kind: CriticKind, cfg: &TrainConfig) -> Result<PreparedBatch> {
    if buffer.is_empty() {
        return Err(Error::Config {
            field: "buffer".into(),
            message: "cannot prepare an empty rollout buffer".into(),
        });
    }
    let n = buffer.len();
    let obs = ArrayView2::from_shape((n, buffer.obs_dim), &buffer.obs).unwrap();
    let next_obs = ArrayView2::from_shape((n, buffer.obs_dim), &buffer.next_obs).unwrap();
    let values = critic.values(obs)?;
    let next_q = critic.quantiles(next_obs)?;
    let next_values: Vec<f64> = next_q
        .rows()
        .into_iter()
        .map(|r| crate::nn::value_mean(r.as_slice().unwrap(), &critic.levels))
        .collect();

    let mut advantages = vec![0.0; n];
    let mut returns = vec![0.0; n];
    for e in 0..buffer.num_envs {
        let idx: Vec<usize> = buffer.env_indices(e).collect();
        let r: Vec<f64> = idx.iter().map(|&i| buffer.reward(i)).collect();
        let v: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        let nv: Vec<f64> = idx.iter().map(|&i| next_values[i]).collect();
        let d: Vec<Done> = idx.iter().map(|&i| buffer.done(i)).collect();
        let (a, ret) = compute_gae(&r, &v, &nv, &d, cfg.gamma, cfg.lambda)?;
        for (k, &i) in idx.iter().enumerate() {
            advantages[i] = a[k];
            returns[i] = ret[k];
        }
    }
    normalize_advantages(&mut advantages);

    let (targets, target_width) = match kind {
        CriticKind::Scalar => (returns.clone(), 1),
        CriticKind::Distributional => {
            let m = critic.num_quantiles();
            let mut t = Vec::with_capacity(n * m);
            for i in 0..n {
                let mask = buffer.done(i).bootstrap_mask();
                let r = buffer.reward(i);
                t.extend(next_q.row(i).iter().map(|d| r + cfg.gamma * mask * d));
            }
            (t, m)
        }
    };
    Ok(PreparedBatch {
        values,
        advantages,
        returns,
        targets,
        target_width,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub mirror_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub explained_variance: f64,
}

/// `1 − Var(returns − values) / Var(returns)`.
pub fn explained_variance(values: &[f64], returns: &[f64]) -> f64 {
    let n = returns.len().max(1) as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let resid: Vec<f64> = returns.iter().zip(values).map(|(r, v)| r - v).collect();
    let rmean = resid.iter().sum::<f64>() / n;
    let rvar = resid.iter().map(|r| (r - rmean).powi(2)).sum::<f64>() / n;
    if var <= 1e-12 {
        0.0
    } else {
        1.0 - rvar / var
    }
}

/// Several epochs of shuffled minibatch updates. The policy minimizes the
/// clipped surrogate plus `mirror_weight` times the mirror loss; the critic
/// minimizes its value loss. Losses in the stats are minibatch averages.
pub fn update<R: Rng + ?Sized>(
    learner: &mut Learner,
    buffer: &RolloutBuffer,
    batch: &PreparedBatch,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    let n = buffer.len();
    let obs_dim = buffer.obs_dim;
    let act_dim = buffer.action_dim;
    let mb = cfg.minibatch.min(n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats {
        explained_variance: explained_variance(&batch.values, &batch.returns),
        ..UpdateStats::default()
    };
    let mut count = 0usize;
    let log_std = learner.policy.log_std;
    let midpoints = learner.critic.levels.midpoints().to_vec();
    let width = batch.target_width;

    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb) {
            let b = chunk.len();
            let obs = gather_rows(&buffer.obs, obs_dim, chunk);

            // Policy.
            let policy = &mut learner.policy;
            policy.net.zero_grad();
            let cache = policy.net.forward(obs.view())?;
            let means = cache.output();
            let mut lp_new = Vec::with_capacity(b);
            let mut lp_old = Vec::with_capacity(b);
            let mut adv = Vec::with_capacity(b);
            for (r, &i) in chunk.iter().enumerate() {
                let mean = means.row(r);
                lp_new.push(crate::nn::policy::gaussian_log_prob(mean.as_slice().unwrap(), buffer.action_row(i), log_std));
                lp_old.push(buffer.log_probs[i]);
                adv.push(batch.advantages[i]);
            }
            let pl = policy_loss(&lp_new, &lp_old, &adv, cfg.clip)?;
            let mut upstream = Array2::zeros((b, act_dim));
            let mut g = vec![0.0; act_dim];
            for (r, &i) in chunk.iter().enumerate() {
                log_prob_grad_mean(means.row(r).as_slice().unwrap(), buffer.action_row(i), log_std, &mut g)?;
                for k in 0..act_dim {
                    upstream[(r, k)] = pl.grad_log_prob[r] * g[k];
                }
            }
            policy.net.backward(&cache, upstream.view())?;
            let ml = if cfg.mirror_weight > 0.0 {
                mirror_loss_backward(&mut policy.net, obs.view(), &learner.mirror, cfg.mirror_weight)?
            } else {
                0.0
            };
            let (p, gr) = policy.net.params_and_grads();
            learner.policy_opt.step(p, gr)?;

            // Critic.
            let critic = &mut learner.critic;
            critic.net.zero_grad();
            let cc = critic.forward(obs.view())?;
            let m = critic.num_quantiles();
            let mut vup = Array2::zeros((b, m));
            let mut vl = 0.0;
            let mut gq = vec![0.0; m];
            for (r, &i) in chunk.iter().enumerate() {
                let pred = cc.quantiles.row(r);
                let pred = pred.as_slice().unwrap();
                let targets = &batch.targets[i * width..(i + 1) * width];
                match learner.critic_kind {
                    CriticKind::Scalar => {
                        let diff = pred[0] - targets[0];
                        vl += 0.5 * diff * diff;
                        gq[0] = diff;
                    }
                    CriticKind::Distributional => {
                        vl += cfg.value_loss.loss(pred, targets, &midpoints);
                        cfg.value_loss.grad(pred, targets, &midpoints, &mut gq);
                    }
                }
                for k in 0..m {
                    vup[(r, k)] = gq[k] / b as f64;
                }
            }
            critic.backward(&cc, vup.view())?;
            let (p, gr) = critic.net.params_and_grads();
            learner.critic_opt.step(p, gr)?;

            stats.policy_loss += pl.loss;
            stats.mirror_loss += ml;
            stats.value_loss += vl / b as f64;
            stats.approx_kl += pl.approx_kl;
            stats.clip_fraction += pl.clip_fraction;
            count += 1;
        }
    }
    let c = count.max(1) as f64;
    stats.policy_loss /= c;
    stats.mirror_loss /= c;
    stats.value_loss /= c;
    stats.approx_kl /= c;
    stats.clip_fraction /= c;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::buffer::Transition;
    use crate::reward::{RewardBreakdown, Termination};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_mirror(obs_dim: usize, act_dim: usize) -> MirrorSpec {
        MirrorSpec::new((0..obs_dim).collect(), vec![1.0; obs_dim], (0..act_dim).collect(), vec![1.0; act_dim]).unwrap()
    }

    fn one_hot(i: usize, n: usize) -> Vec<f64> {
        (0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect()
    }

    /// Chain `0 → 1 → … → 4 → end` with reward `r_s` on leaving state `s`,
    /// collected by `envs` environments started at staggered states.
    fn chain_buffer(learner: &Learner, rewards: &[f64], envs: usize, horizon: usize, rng: &mut ChaCha8Rng) -> RolloutBuffer {
        let ns = rewards.len();
        let mut buf = RolloutBuffer::new(envs, horizon, ns, 1);
        let mut state: Vec<usize> = (0..envs).map(|e| e % ns).collect();
        for _ in 0..horizon {
            for s in state.iter_mut() {
                let obs = one_hot(*s, ns);
                let mean = learner.policy.mean(&obs).unwrap();
                let (a, lp) = learner.policy.sample(&mean, rng);
                let last = *s + 1 == ns;
                let next = if last { one_hot(0, ns) } else { one_hot(*s + 1, ns) };
                buf.push(Transition {
                    obs: &obs,
                    next_obs: &next,
                    action: &a,
                    log_prob: lp,
                    reward: RewardBreakdown {
                        total: rewards[*s],
                        ..RewardBreakdown::default()
                    },
                    termination: if last { Termination::Fell } else { Termination::Running },
                })
                .unwrap();
                *s = if last { 0 } else { *s + 1 };
            }
        }
        buf
    }

    fn chain_values(rewards: &[f64], gamma: f64) -> Vec<f64> {
        let mut v = vec![0.0; rewards.len()];
        let mut acc = 0.0;
        for s in (0..rewards.len()).rev() {
            acc = rewards[s] + gamma * acc;
            v[s] = acc;
        }
        v
    }

    fn train_chain(kind: CriticKind) -> (Vec<f64>, Vec<f64>) {
        let rewards = [1.0, 0.0, 0.5, -0.5, 2.0];
        let cfg = TrainConfig {
            gamma: 0.9,
            lr: 3e-3,
            epochs: 4,
            minibatch: 50,
            critic: kind,
            quantiles: 8,
            policy_hidden: vec![8],
            value_hidden: vec![32],
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut learner = Learner::new(5, 1, identity_mirror(5, 1), &cfg, &mut rng).unwrap();
        for _ in 0..200 {
            let buf = chain_buffer(&learner, &rewards, 10, 10, &mut rng);
            let batch = prepare(&buf, &learner.critic, kind, &cfg).unwrap();
            update(&mut learner, &buf, &batch, &cfg, &mut rng).unwrap();
        }
        let obs = Array2::from_shape_fn((5, 5), |(r, c)| if r == c { 1.0 } else { 0.0 });
        (learner.critic.values(obs.view()).unwrap(), chain_values(&rewards, cfg.gamma))
    }

    #[test]
    fn chain_values_converge_to_dynamic_programming() {
        for kind in [CriticKind::Distributional, CriticKind::Scalar] {
            let (learned, exact) = train_chain(kind);
            for (l, e) in learned.iter().zip(&exact) {
                assert!((l - e).abs() < 0.05, "{kind:?}: {learned:?} vs {exact:?}");
            }
        }
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 2,
            minibatch: 7,
            quantiles: 4,
            policy_hidden: vec![4],
            value_hidden: vec![4],
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut learner = Learner::new(5, 1, identity_mirror(5, 1), &cfg, &mut rng).unwrap();
        let before = (learner.policy.clone(), learner.critic.clone());
        let buf = chain_buffer(&learner, &[1.0, 0.0, 0.0, 0.0, 1.0], 4, 5, &mut rng);
        let batch = prepare(&buf, &learner.critic, cfg.critic, &cfg).unwrap();
        let stats = update(&mut learner, &buf, &batch, &cfg, &mut rng).unwrap();
        assert_eq!(learner.policy.net.params(), before.0.net.params());
        assert_eq!(learner.critic.net.params(), before.1.net.params());
        assert!(stats.value_loss > 0.0 && stats.policy_loss.is_finite());
        // First minibatch sees the collecting policy, so nothing is clipped.
        assert_eq!(stats.clip_fraction, 0.0);
        assert!(stats.approx_kl.abs() < 1e-12);
    }

    #[test]
    fn terminal_targets_are_rewards_only() {
        let cfg = TrainConfig {
            quantiles: 4,
            policy_hidden: vec![4],
            value_hidden: vec![4],
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let learner = Learner::new(5, 1, identity_mirror(5, 1), &cfg, &mut rng).unwrap();
        let buf = chain_buffer(&learner, &[0.0, 0.0, 0.0, 0.0, 3.0], 1, 5, &mut rng);
        let batch = prepare(&buf, &learner.critic, cfg.critic, &cfg).unwrap();
        assert_eq!(&batch.targets[16..20], &[3.0; 4]);
        assert!(prepare(&RolloutBuffer::new(1, 1, 5, 1), &learner.critic, cfg.critic, &cfg).is_err());
    }

    #[test]
    fn explained_variance_examples() {
        assert_eq!(explained_variance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(explained_variance(&[0.0; 3], &[1.0, 2.0, 3.0]), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { gamma: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lambda: 1.5, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { clip: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
    }
}
