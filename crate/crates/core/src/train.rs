//! Training loop, metrics log and checkpoint I/O.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algo::{prepare, update, CriticKind, Learner, UpdateStats};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::motion::{generate_walk, load_motion, ReferenceMotion};
use crate::nn::{Checkpoint, GaussianPolicy, QuantileCritic, QuantileLevels};
use crate::reward::RewardBreakdown;
use crate::runtime::{collect, mirror_spec, ObsLayout, VecEnv};
use crate::sim::RobotModel;

pub const METRICS_VERSION: u32 = 1;
pub const METRICS_HEADER: &str = "update,steps,episodes,mean_episode_length,mean_reward,mimic,foot,smooth,energy,osc,policy_loss,value_loss,mirror_loss,approx_kl,clip_fraction,explained_variance";

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const LAYOUT_FILE: &str = "obs_layout.json";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub update: usize,
    /// Control steps collected so far, across all environments.
    pub steps: usize,
    /// Episodes finished during this update's rollout.
    pub episodes: usize,
    /// Mean length of those episodes; carried over from the previous row
    /// when none finished.
    pub mean_episode_length: f64,
    pub reward: RewardBreakdown,
    pub stats: UpdateStats,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let r = &self.reward;
        let s = &self.stats;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.update,
            self.steps,
            self.episodes,
            self.mean_episode_length,
            r.total,
            r.mimic,
            r.foot,
            r.smooth,
            r.energy,
            r.osc,
            s.policy_loss,
            s.value_loss,
            s.mirror_loss,
            s.approx_kl,
            s.clip_fraction,
            s.explained_variance
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Config {
            field: "metrics".into(),
            message: format!("malformed metrics row `{line}`"),
        };
        if f.len() != 16 {
            return Err(bad());
        }
        let u = |i: usize| f[i].parse::<usize>().map_err(|_| bad());
        let x = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        Ok(Self {
            update: u(0)?,
            steps: u(1)?,
            episodes: u(2)?,
            mean_episode_length: x(3)?,
            reward: RewardBreakdown {
                total: x(4)?,
                mimic: x(5)?,
                foot: x(6)?,
                smooth: x(7)?,
                energy: x(8)?,
                osc: x(9)?,
            },
            stats: UpdateStats {
                policy_loss: x(10)?,
                value_loss: x(11)?,
                mirror_loss: x(12)?,
                approx_kl: x(13)?,
                clip_fraction: x(14)?,
                explained_variance: x(15)?,
            },
        })
    }
}

pub fn metrics_preamble() -> String {
    format!("# strider metrics v{METRICS_VERSION}\n{METRICS_HEADER}\n")
}

/// Reads a metrics file written by [`train`].
pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.starts_with('#') && *l != METRICS_HEADER && !l.is_empty())
        .map(MetricsRow::from_csv)
        .collect()
}

/// Loads the robot model and reference motion named by the config.
pub fn load_assets(cfg: &RunConfig) -> Result<(RobotModel, ReferenceMotion)> {
    let model = match &cfg.model {
        Some(p) => RobotModel::load(p)?,
        None => RobotModel::planar_walker(),
    };
    let motion = match &cfg.motion {
        Some(p) => load_motion(p, &model)?,
        None => generate_walk(&model, &cfg.gait)?,
    };
    Ok((model, motion))
}

/// Collect-then-update loop over a batch of environments.
pub struct Trainer {
    cfg: RunConfig,
    envs: VecEnv,
    learner: Learner,
    rng: ChaCha8Rng,
    steps: usize,
    updates: usize,
    last_length: f64,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let (model, motion) = load_assets(&cfg)?;
        let mirror = mirror_spec(&model)?;
        let t = &cfg.train;
        let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
        let envs = VecEnv::new(Arc::new(model), Arc::new(motion), &cfg.effective_env(), t.num_envs, rand::Rng::random(&mut rng))?;
        let learner = Learner::new(envs.obs_dim(), envs.action_dim(), mirror, t, &mut rng)?;
        Ok(Self {
            cfg,
            envs,
            learner,
            rng,
            steps: 0,
            updates: 0,
            last_length: 0.0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn layout(&self) -> ObsLayout {
        self.envs.envs()[0].layout()
    }

    pub fn is_done(&self) -> bool {
        self.steps >= self.cfg.train.total_steps
    }

    /// One rollout followed by one PPO update.
    pub fn step(&mut self) -> Result<MetricsRow> {
        let t = &self.cfg.train;
        let buffer = collect(&mut self.envs, &self.learner.policy, t.horizon, &mut self.rng)?;
        let batch = prepare(&buffer, &self.learner.critic, self.learner.critic_kind, t)?;
        let stats = update(&mut self.learner, &buffer, &batch, t, &mut self.rng)?;
        self.steps += buffer.len();
        self.updates += 1;
        if !buffer.episodes.is_empty() {
            self.last_length = buffer.episodes.iter().map(|e| e.length as f64).sum::<f64>() / buffer.episodes.len() as f64;
        }
        Ok(MetricsRow {
            update: self.updates,
            steps: self.steps,
            episodes: buffer.episodes.len(),
            mean_episode_length: self.last_length,
            reward: buffer.mean_reward(),
            stats,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        let critic = match self.learner.critic_kind {
            CriticKind::Distributional => "distributional",
            CriticKind::Scalar => "scalar",
        };
        for (k, v) in [
            ("critic", critic.to_string()),
            ("log_std", format!("{:e}", self.learner.policy.log_std)),
            ("quantiles", self.learner.critic.num_quantiles().to_string()),
            ("seed", self.cfg.train.seed.to_string()),
            ("steps", self.steps.to_string()),
            ("updates", self.updates.to_string()),
        ] {
            ck.meta.insert(k.to_string(), v);
        }
        for (name, net) in [("policy", &self.learner.policy.net), ("critic", &self.learner.critic.net)] {
            let mut net = net.clone();
            net.zero_grad();
            ck.nets.push((name.into(), net));
        }
        ck
    }
}

/// Policy stored in a checkpoint.
pub fn policy_from_checkpoint(ck: &Checkpoint) -> Result<GaussianPolicy> {
    let mut p = GaussianPolicy::from_net(ck.net("policy")?.clone());
    if let Ok(v) = ck.meta("log_std") {
        p.log_std = v.parse().map_err(|_| Error::Checkpoint(format!("bad log_std `{v}`")))?;
    }
    Ok(p)
}

/// Critic stored in a checkpoint.
pub fn critic_from_checkpoint(ck: &Checkpoint) -> Result<QuantileCritic> {
    let net = ck.net("critic")?.clone();
    QuantileCritic::from_parts(net.clone(), QuantileLevels::uniform(net.output_dim())?)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub checkpoint: Checkpoint,
    /// Where files were written, if anywhere.
    pub output_dir: Option<PathBuf>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot create {}: {e}", dir.display()))))
}

/// Runs training to `train.total_steps`. With an output directory it writes
/// the resolved config, the observation layout, the metrics log (one row per
/// update), periodic checkpoints and the final checkpoint. `progress` sees
/// every row as it is produced.
pub fn train(cfg: &RunConfig, output_dir: Option<&Path>, mut progress: impl FnMut(&MetricsRow)) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut metrics = None;
    if let Some(dir) = output_dir {
        create_dir(dir)?;
        fs::write(dir.join(CONFIG_FILE), cfg.to_toml_string())?;
        fs::write(dir.join(LAYOUT_FILE), trainer.layout().to_json())?;
        let mut w = BufWriter::new(File::create(dir.join(METRICS_FILE))?);
        w.write_all(metrics_preamble().as_bytes())?;
        metrics = Some(w);
        if cfg.checkpoint_every > 0 {
            create_dir(&dir.join("checkpoints"))?;
        }
    }
    let mut rows = Vec::new();
    while !trainer.is_done() {
        let row = trainer.step()?;
        if let Some(w) = metrics.as_mut() {
            writeln!(w, "{}", row.to_csv())?;
            w.flush()?;
        }
        if let Some(dir) = output_dir {
            if cfg.checkpoint_every > 0 && row.update % cfg.checkpoint_every == 0 {
                trainer
                    .checkpoint()
                    .save(dir.join("checkpoints").join(format!("update_{:06}.ckpt", row.update)))?;
            }
        }
        progress(&row);
        rows.push(row);
    }
    let checkpoint = trainer.checkpoint();
    if let Some(dir) = output_dir {
        checkpoint.save(dir.join(FINAL_CHECKPOINT))?;
    }
    Ok(TrainOutcome {
        rows,
        checkpoint,
        output_dir: output_dir.map(Path::to_path_buf),
    })
}

/// Renders rows as a complete metrics file.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = metrics_preamble();
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        RunConfig::default()
            .apply_overrides(&[
                "num_envs=2",
                "horizon=8",
                "total_steps=32",
                "minibatch=8",
                "epochs=2",
                "quantiles=4",
                "policy_hidden=[8]",
                "value_hidden=[8]",
                "env.max_steps=10",
                "checkpoint_every=2",
            ])
            .unwrap()
    }

    #[test]
    fn writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = train(&tiny(), Some(dir.path()), |_| {}).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.rows[1].steps, 32);
        let text = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert!(text.starts_with("# strider metrics v1\n"));
        assert_eq!(text.lines().count(), 4);
        assert_eq!(read_metrics(dir.path().join(METRICS_FILE)).unwrap(), out.rows);
        let snapshot = RunConfig::load(dir.path().join(CONFIG_FILE)).unwrap();
        assert_eq!(snapshot, tiny());
        let layout = ObsLayout::from_json(&fs::read_to_string(dir.path().join(LAYOUT_FILE)).unwrap()).unwrap();
        assert_eq!(layout.dim, 33);
        let ck = Checkpoint::load(dir.path().join(FINAL_CHECKPOINT)).unwrap();
        assert_eq!(ck, out.checkpoint);
        assert!(dir.path().join("checkpoints/update_000002.ckpt").exists());
        assert_eq!(policy_from_checkpoint(&ck).unwrap().net, out.checkpoint.net("policy").unwrap().clone());
        assert_eq!(critic_from_checkpoint(&ck).unwrap().num_quantiles(), 4);
    }

    #[test]
    fn training_is_deterministic() {
        let a = train(&tiny(), None, |_| {}).unwrap();
        let b = train(&tiny(), None, |_| {}).unwrap();
        assert_eq!(metrics_csv(&a.rows), metrics_csv(&b.rows));
        assert_eq!(a.checkpoint, b.checkpoint);
    }

    #[test]
    fn metrics_row_round_trips() {
        let out = train(&tiny(), None, |_| {}).unwrap();
        for r in &out.rows {
            assert_eq!(MetricsRow::from_csv(&r.to_csv()).unwrap(), *r);
        }
        assert!(MetricsRow::from_csv("1,2,3").is_err());
    }
}
