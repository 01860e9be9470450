use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::env::{Disturbance, Env, EnvConfig, Push};
use crate::error::{Error, Result};
use crate::motion::ReferenceMotion;
use crate::nn::GaussianPolicy;
use crate::randomization::RndConfig;
use crate::reward::Termination;
use crate::sim::RobotModel;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    /// Episodes that reached the step cap without falling.
    pub successes: usize,
    pub success_rate: f64,
    pub mean_length: f64,
    pub mean_mimic: f64,
    /// Mean per-step RMS joint tracking error, rad.
    pub mean_tracking_error: f64,
}

/// Runs `episodes` deterministic episodes with the policy mean. `None` runs
/// the open-loop reference (zero residual). Training randomization is
/// switched off; `disturbance` applies instead.
pub fn evaluate(
    policy: Option<&GaussianPolicy>,
    model: &RobotModel,
    motion: &Arc<ReferenceMotion>,
    cfg: &EnvConfig,
    disturbance: Disturbance,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Ok(EvalReport::default());
    }
    let cfg = EnvConfig {
        randomization: RndConfig::disabled(),
        ..cfg.clone()
    };
    let mut env = Env::new(Arc::new(model.clone()), motion.clone(), cfg, seed)?;
    env.set_disturbance(disturbance);
    let nj = env.action_dim();
    let zero = vec![0.0; nj];
    let (mut successes, mut length, mut mimic, mut err, mut steps) = (0usize, 0usize, 0.0, 0.0, 0usize);
    for _ in 0..episodes {
        let mut obs = env.reset()?;
        loop {
            let residual = match policy {
                Some(p) => p.mean(&obs)?,
                None => zero.clone(),
            };
            let q_ref = env.current_frame().q.clone();
            let out = env.control_step(&residual)?;
            mimic += out.reward.mimic;
            let sq: f64 = env.state().q.iter().zip(&q_ref).map(|(a, b)| (a - b) * (a - b)).sum();
            err += (sq / nj as f64).sqrt();
            steps += 1;
            obs = out.obs;
            if out.termination.is_done() {
                if out.termination == Termination::TimeLimit {
                    successes += 1;
                }
                length += env.steps();
                break;
            }
        }
    }
    let n = episodes as f64;
    Ok(EvalReport {
        episodes,
        successes,
        success_rate: successes as f64 / n,
        mean_length: length as f64 / n,
        mean_mimic: mimic / steps as f64,
        mean_tracking_error: err / steps as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Multiplier on every PD gain.
    Gain,
    /// Multiplier on every link mass and inertia.
    Mass,
    /// Constant torque offset as a fraction of the torque limits.
    Offset,
    /// Torso push magnitude, N, applied for 0.2 s starting at 2 s.
    Push,
}

impl SweepKind {
    pub const ALL: [SweepKind; 4] = [SweepKind::Gain, SweepKind::Mass, SweepKind::Offset, SweepKind::Push];

    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Gain => "gain",
            SweepKind::Mass => "mass",
            SweepKind::Offset => "offset",
            SweepKind::Push => "push",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        // Integer numerators keep values like 1.2 exact in CSV output.
        let grid = |first: u32, per_unit: f64, n: u32| (first..first + n).map(|i| f64::from(i) / per_unit).collect();
        match self {
            SweepKind::Gain => grid(5, 10.0, 11),
            SweepKind::Mass => grid(16, 20.0, 9),
            SweepKind::Offset => grid(0, 20.0, 7),
            SweepKind::Push => (0..7).map(|i| 50.0 * f64::from(i)).collect(),
        }
    }

    /// Model variant and disturbance for one sweep value.
    pub fn apply(self, model: &RobotModel, value: f64) -> (RobotModel, Disturbance) {
        match self {
            SweepKind::Gain => (model.with_gain_scale(value), Disturbance::default()),
            SweepKind::Mass => (model.with_mass_scale(value), Disturbance::default()),
            SweepKind::Offset => (
                model.clone(),
                Disturbance {
                    torque_offset: value,
                    push: None,
                },
            ),
            SweepKind::Push => (
                model.clone(),
                Disturbance {
                    torque_offset: 0.0,
                    push: Some(Push {
                        start_step: 100,
                        duration_steps: 10,
                        force: value,
                    }),
                },
            ),
        }
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::Config {
            field: "sweep".into(),
            message: format!("unknown sweep `{s}`, expected one of gain, mass, offset, push"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub kind: SweepKind,
    pub value: f64,
    pub report: EvalReport,
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    policy: Option<&GaussianPolicy>,
    model: &RobotModel,
    motion: &Arc<ReferenceMotion>,
    cfg: &EnvConfig,
    kind: SweepKind,
    values: &[f64],
    episodes: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    values
        .iter()
        .map(|&value| {
            let (m, d) = kind.apply(model, value);
            Ok(SweepPoint {
                kind,
                value,
                report: evaluate(policy, &m, motion, cfg, d, episodes, seed)?,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "sweep,value,episodes,success_rate,mean_length,mean_mimic,mean_tracking_error";

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for p in points {
        let r = &p.report;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.kind.name(),
            p.value,
            r.episodes,
            r.success_rate,
            r.mean_length,
            r.mean_mimic,
            r.mean_tracking_error
        )
        .expect("write to string");
    }
    out
}
