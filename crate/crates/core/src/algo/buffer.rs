use super::gae::Done;
use crate::error::{check_len, Result};
use crate::reward::{RewardBreakdown, Termination};

/// One environment transition as recorded during collection.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<'a> {
    pub obs: &'a [f64],
    /// Observation of the state reached, taken before any automatic reset.
    pub next_obs: &'a [f64],
    pub action: &'a [f64],
    pub log_prob: f64,
    pub reward: RewardBreakdown,
    pub termination: Termination,
}

/// Summary of an episode that finished during collection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub length: usize,
    pub total_reward: f64,
    pub termination: Termination,
}

/// On-policy storage, time-major: transition `(t, e)` lives at `t · envs + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub horizon: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub obs: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<RewardBreakdown>,
    pub terminations: Vec<Termination>,
    pub episodes: Vec<EpisodeSummary>,
}

impl RolloutBuffer {
    pub fn new(num_envs: usize, horizon: usize, obs_dim: usize, action_dim: usize) -> Self {
        let cap = num_envs * horizon;
        Self {
            num_envs,
            horizon,
            obs_dim,
            action_dim,
            obs: Vec::with_capacity(cap * obs_dim),
            next_obs: Vec::with_capacity(cap * obs_dim),
            actions: Vec::with_capacity(cap * action_dim),
            log_probs: Vec::with_capacity(cap),
            rewards: Vec::with_capacity(cap),
            terminations: Vec::with_capacity(cap),
            episodes: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.num_envs * self.horizon
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.capacity()
    }

    pub fn push(&mut self, t: Transition<'_>) -> Result<()> {
        check_len("buffer observation", self.obs_dim, t.obs.len())?;
        check_len("buffer next observation", self.obs_dim, t.next_obs.len())?;
        check_len("buffer action", self.action_dim, t.action.len())?;
        if self.is_full() {
            return Err(crate::Error::Config {
                field: "buffer".into(),
                message: format!("rollout buffer full at {} transitions", self.capacity()),
            });
        }
        self.obs.extend_from_slice(t.obs);
        self.next_obs.extend_from_slice(t.next_obs);
        self.actions.extend_from_slice(t.action);
        self.log_probs.push(t.log_prob);
        self.rewards.push(t.reward);
        self.terminations.push(t.termination);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.obs.clear();
        self.next_obs.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.rewards.clear();
        self.terminations.clear();
        self.episodes.clear();
    }

    pub fn done(&self, idx: usize) -> Done {
        Done::from(self.terminations[idx])
    }

    pub fn reward(&self, idx: usize) -> f64 {
        self.rewards[idx].total
    }

    pub fn obs_row(&self, idx: usize) -> &[f64] {
        &self.obs[idx * self.obs_dim..(idx + 1) * self.obs_dim]
    }

    pub fn action_row(&self, idx: usize) -> &[f64] {
        &self.actions[idx * self.action_dim..(idx + 1) * self.action_dim]
    }

    /// Indices of environment `env` in time order.
    pub fn env_indices(&self, env: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len() / self.num_envs.max(1)).map(move |t| t * self.num_envs + env)
    }

    /// Number of transitions that ended an episode.
    pub fn done_count(&self) -> usize {
        self.terminations.iter().filter(|t| t.is_done()).count()
    }

    /// Per-component mean of the reward breakdown.
    pub fn mean_reward(&self) -> RewardBreakdown {
        let n = self.rewards.len().max(1) as f64;
        let mut acc = RewardBreakdown::default();
        for r in &self.rewards {
            acc.mimic += r.mimic;
            acc.foot += r.foot;
            acc.smooth += r.smooth;
            acc.energy += r.energy;
            acc.osc += r.osc;
            acc.total += r.total;
        }
        RewardBreakdown {
            mimic: acc.mimic / n,
            foot: acc.foot / n,
            smooth: acc.smooth / n,
            energy: acc.energy / n,
            osc: acc.osc / n,
            total: acc.total / n,
        }
    }
}
