use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::env::{Env, EnvConfig};
use crate::algo::{EpisodeSummary, RolloutBuffer, Transition};
use crate::error::{Error, Result};
use crate::motion::ReferenceMotion;
use crate::nn::GaussianPolicy;
use crate::sim::RobotModel;

/// A batch of independent environments stepped in lockstep.
#[derive(Debug, Clone)]
pub struct VecEnv {
    envs: Vec<Env>,
}

impl VecEnv {
    /// Environment seeds are drawn in order from a generator seeded with `seed`.
    pub fn new(model: Arc<RobotModel>, motion: Arc<ReferenceMotion>, cfg: &EnvConfig, num_envs: usize, seed: u64) -> Result<Self> {
        if num_envs == 0 {
            return Err(Error::Config {
                field: "num_envs".into(),
                message: "must be positive".into(),
            });
        }
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let envs = (0..num_envs)
            .map(|_| Env::new(model.clone(), motion.clone(), cfg.clone(), seeds.random()))
            .collect::<Result<_>>()?;
        Ok(Self { envs })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[Env] {
        &self.envs
    }

    pub fn envs_mut(&mut self) -> &mut [Env] {
        &mut self.envs
    }

    pub fn obs_dim(&self) -> usize {
        self.envs[0].obs_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.envs[0].action_dim()
    }

    pub fn observations(&self) -> Array2<f64> {
        let d = self.obs_dim();
        let mut out = Array2::zeros((self.len(), d));
        for (mut row, env) in out.rows_mut().into_iter().zip(&self.envs) {
            row.assign(&ndarray::ArrayView1::from(&env.observation()));
        }
        out
    }
}

/// Collects `horizon` control steps from every environment with a stochastic
/// policy. Finished environments are reset in place; the stored next
/// observation is the one reached before the reset.
pub fn collect<R: Rng + ?Sized>(envs: &mut VecEnv, policy: &GaussianPolicy, horizon: usize, rng: &mut R) -> Result<RolloutBuffer> {
    let (obs_dim, act_dim) = (envs.obs_dim(), envs.action_dim());
    let mut buffer = RolloutBuffer::new(envs.len(), horizon, obs_dim, act_dim);
    for _ in 0..horizon {
        let obs = envs.observations();
        let means = policy.means(obs.view())?;
        for (e, env) in envs.envs.iter_mut().enumerate() {
            let mean = means.row(e);
            let (action, log_prob) = policy.sample(mean.as_slice().expect("standard layout"), rng);
            let out = env.control_step(&action)?;
            buffer.push(Transition {
                obs: obs.row(e).as_slice().expect("standard layout"),
                next_obs: &out.obs,
                action: &action,
                log_prob,
                reward: out.reward,
                termination: out.termination,
            })?;
            if out.termination.is_done() {
                buffer.episodes.push(EpisodeSummary {
                    length: env.steps(),
                    total_reward: env.episode_return(),
                    termination: out.termination,
                });
                env.reset()?;
            }
        }
    }
    Ok(buffer)
}
