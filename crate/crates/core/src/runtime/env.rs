use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::actions::{compose_action, ActionWeights};
use super::observation::{build_observation, ObsLayout};
use crate::error::{check_len, Error, Result};
use crate::motion::{ReferenceMotion, TargetFrame};
use crate::randomization::{delayed_target, perturb_torque, sample_episode, PerturbState, RndConfig};
use crate::reward::{check_termination, total_reward, RewardBreakdown, RewardConfig, RewardInputs, Termination, TerminationConfig};
use crate::sim::{self, gravity_projection, pd_torque, step_with_forces, ContactReport, ExternalForce, FootContact, RobotModel, SimState, PHYSICS_DT};

/// Policy rate, Hz.
pub const CONTROL_HZ: f64 = 50.0;
/// Physics substeps per control step.
pub const SUBSTEPS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub randomization: RndConfig,
    pub reward: RewardConfig,
    pub weights: ActionWeights,
    /// Fraction of each joint range allowed before terminating.
    pub joint_limit_fraction: f64,
    /// Torso height, as a fraction of the standing height, below which the
    /// episode ends.
    pub min_height_fraction: f64,
    /// Episode cap in control steps.
    pub max_steps: usize,
    /// Uniform noise on the initial joint positions, rad.
    pub init_noise: f64,
    /// Loop the reference cycle after the clip ends.
    pub cyclic: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            randomization: RndConfig::default(),
            reward: RewardConfig::default(),
            weights: ActionWeights::default(),
            joint_limit_fraction: 0.95,
            min_height_fraction: 0.6,
            max_steps: 1000,
            init_noise: 0.01,
            cyclic: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Config {
                field: field.into(),
                message,
            })
        };
        self.randomization.validate().or_else(|m| bad("randomization", m))?;
        self.weights.validate()?;
        if !(self.reward.energy_weight >= 0.0 && self.reward.energy_weight.is_finite()) {
            return bad("energy_weight", format!("must be finite and non-negative, got {}", self.reward.energy_weight));
        }
        if !(self.joint_limit_fraction > 0.0 && self.joint_limit_fraction <= 1.0) {
            return bad("joint_limit_fraction", format!("must lie in (0, 1], got {}", self.joint_limit_fraction));
        }
        if !(0.0..1.0).contains(&self.min_height_fraction) {
            return bad("min_height_fraction", format!("must lie in [0, 1), got {}", self.min_height_fraction));
        }
        if self.max_steps == 0 {
            return bad("max_steps", "must be positive".into());
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return bad("init_noise", format!("must be non-negative, got {}", self.init_noise));
        }
        if !(self.reward.foot_force_body_weights > 0.0) {
            return bad("reward.foot_force_body_weights", "must be positive".into());
        }
        Ok(())
    }
}

/// Horizontal push on the torso center of mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Push {
    pub start_step: usize,
    pub duration_steps: usize,
    /// N, positive pushes forward.
    pub force: f64,
}

/// Evaluation-time disturbances layered on top of the environment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Disturbance {
    /// Constant per-episode torque offset as a fraction of each torque limit,
    /// with a random sign per joint.
    pub torque_offset: f64,
    pub push: Option<Push>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub termination: Termination,
    /// Observation after the step, before any reset.
    pub obs: Vec<f64>,
    /// Joint targets sent to the PD controllers before the delay filter.
    pub action: Vec<f64>,
    /// Per-foot contact at the substep with the largest normal force.
    pub contacts: ContactReport,
}

/// Single walker tracking a reference clip.
#[derive(Debug, Clone)]
pub struct Env {
    model: Arc<RobotModel>,
    motion: Arc<ReferenceMotion>,
    cfg: EnvConfig,
    termination: TerminationConfig,
    force_threshold: f64,
    disturbance: Disturbance,
    seeds: ChaCha8Rng,
    rng: ChaCha8Rng,
    episode_seed: u64,
    state: SimState,
    perturb: PerturbState,
    offset: Vec<f64>,
    prev_action: Vec<f64>,
    steps: usize,
    episode_return: f64,
}

impl Env {
    pub fn new(model: Arc<RobotModel>, motion: Arc<ReferenceMotion>, cfg: EnvConfig, seed: u64) -> Result<Self> {
        model.validate()?;
        motion.validate_against(&model)?;
        cfg.validate()?;
        let nj = model.num_joints();
        let termination = TerminationConfig::for_model(&model, cfg.joint_limit_fraction, cfg.min_height_fraction, cfg.max_steps);
        let force_threshold = cfg.reward.force_threshold(&model);
        let mut env = Self {
            model,
            motion,
            cfg,
            termination,
            force_threshold,
            disturbance: Disturbance::default(),
            seeds: ChaCha8Rng::seed_from_u64(seed),
            rng: ChaCha8Rng::seed_from_u64(0),
            episode_seed: 0,
            state: SimState::zeros(nj),
            perturb: PerturbState::neutral(nj),
            offset: vec![0.0; nj],
            prev_action: vec![0.0; nj],
            steps: 0,
            episode_return: 0.0,
        };
        env.reset()?;
        Ok(env)
    }

    /// Applies from the next reset on.
    pub fn set_disturbance(&mut self, d: Disturbance) {
        self.disturbance = d;
    }

    /// Starts a new episode with a seed drawn from the environment's seed
    /// stream.
    pub fn reset(&mut self) -> Result<Vec<f64>> {
        let seed = self.seeds.random::<u64>();
        self.reset_with_seed(seed)
    }

    /// Starts a new episode whose randomness derives only from `seed`.
    pub fn reset_with_seed(&mut self, seed: u64) -> Result<Vec<f64>> {
        let nj = self.model.num_joints();
        self.episode_seed = seed;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = self.motion.frame_at(0, self.cfg.cyclic);
        self.state = sim::reset(&self.model, frame, self.cfg.init_noise, &mut self.rng)?;
        self.perturb = sample_episode(&self.cfg.randomization, &self.model, &mut self.rng);
        self.offset = self
            .model
            .joints
            .iter()
            .map(|j| {
                let sign = if self.rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * self.disturbance.torque_offset * j.torque_limit
            })
            .collect();
        self.prev_action = compose_action(&vec![0.0; nj], frame, &self.cfg.weights, &self.model)?;
        self.steps = 0;
        self.episode_return = 0.0;
        Ok(self.observation())
    }

    pub fn observation(&self) -> Vec<f64> {
        build_observation(&self.state, &self.prev_action, self.current_frame()).expect("dimensions checked at construction")
    }

    pub fn layout(&self) -> ObsLayout {
        ObsLayout::new(self.model.num_joints())
    }

    pub fn obs_dim(&self) -> usize {
        self.layout().dim
    }

    pub fn action_dim(&self) -> usize {
        self.model.num_joints()
    }

    /// Reference frame the next action is composed against.
    pub fn current_frame(&self) -> &TargetFrame {
        self.motion.frame_at(self.steps, self.cfg.cyclic)
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }

    pub fn episode_seed(&self) -> u64 {
        self.episode_seed
    }

    pub fn perturbation(&self) -> &PerturbState {
        &self.perturb
    }

    /// Composes `a_rl` with the current reference and advances one control
    /// step.
    pub fn control_step(&mut self, a_rl: &[f64]) -> Result<StepOutcome> {
        check_len("control_step residual", self.action_dim(), a_rl.len())?;
        let action = compose_action(a_rl, self.current_frame(), &self.cfg.weights, &self.model)?;
        self.apply_action(action)
    }

    /// Advances one control step with absolute joint targets.
    pub fn apply_action(&mut self, action: Vec<f64>) -> Result<StepOutcome> {
        let nj = self.model.num_joints();
        check_len("apply_action", nj, action.len())?;
        let q_ref = self.current_frame().q.clone();
        let target = delayed_target(&mut self.perturb, &action, &self.cfg.randomization, &mut self.rng);
        let push = self.disturbance.push.filter(|p| (p.start_step..p.start_step + p.duration_steps).contains(&self.steps));
        let external: Vec<ExternalForce> = push
            .map(|p| ExternalForce {
                link: 0,
                point: self.model.links[0].com,
                force: [p.force, 0.0],
            })
            .into_iter()
            .collect();

        let nfeet = self.model.foot_links().len();
        let mut peak = ContactReport {
            feet: vec![FootContact::default(); nfeet],
        };
        let mut torque = vec![0.0; nj];
        let mut diverged = false;
        for _ in 0..SUBSTEPS {
            let pd = pd_torque(&target, &self.state.q, &self.state.qd, &self.model)?;
            let mut tau = perturb_torque(&pd, &self.perturb, &self.cfg.randomization, &self.model, &mut self.rng);
            if self.disturbance.torque_offset != 0.0 {
                for ((t, o), j) in tau.iter_mut().zip(&self.offset).zip(&self.model.joints) {
                    *t = (*t + o).clamp(-j.torque_limit, j.torque_limit);
                }
            }
            match step_with_forces(&self.model, &self.state, &tau, PHYSICS_DT, &external) {
                Ok((next, report)) => {
                    self.state = next;
                    for (p, f) in peak.feet.iter_mut().zip(report.feet) {
                        if f.force >= p.force {
                            *p = f;
                        }
                    }
                    torque = tau;
                }
                Err(Error::SimulationDiverged { .. }) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        self.steps += 1;

        let reward = total_reward(
            &RewardInputs {
                q: &self.state.q,
                q_ref: &q_ref,
                contacts: &peak,
                force_threshold: self.force_threshold,
                action: &action,
                prev_action: &self.prev_action,
                torque: &torque,
                qd: &self.state.qd,
                gravity_z: gravity_projection(&self.state)[1],
            },
            &self.cfg.reward,
        );
        let termination = if diverged {
            Termination::Fell
        } else {
            check_termination(&self.state, &self.model, &self.termination, self.steps)
        };
        self.prev_action.clone_from(&action);
        self.episode_return += reward.total;
        Ok(StepOutcome {
            reward,
            termination,
            obs: self.observation(),
            action,
            contacts: peak,
        })
    }
}
