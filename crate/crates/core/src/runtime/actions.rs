use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::motion::TargetFrame;
use crate::sim::RobotModel;

/// Multipliers on the open-loop reference for the left lower body, right
/// lower body and upper body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionWeights(pub [f64; 3]);

impl Default for ActionWeights {
    fn default() -> Self {
        Self([1.0, 1.0, 1.0])
    }
}

impl ActionWeights {
    pub const PRESETS: [(&'static str, [f64; 3]); 4] = [
        ("normal", [1.0, 1.0, 1.0]),
        ("left-shift", [0.8, 1.2, 1.0]),
        ("right-shift", [1.1, 0.8, 1.0]),
        ("arm-swing", [0.9, 1.2, 0.6]),
    ];

    pub fn new(w: [f64; 3]) -> Result<Self> {
        if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config {
                field: "weights".into(),
                message: format!("weights must be finite and positive, got {w:?}"),
            });
        }
        Ok(Self(w))
    }

    pub fn preset(name: &str) -> Option<Self> {
        Self::PRESETS.iter().find(|(n, _)| *n == name).map(|(_, w)| Self(*w))
    }

    /// A preset name or a comma-separated triple.
    pub fn parse(text: &str) -> Result<Self> {
        if let Some(w) = Self::preset(text) {
            return Ok(w);
        }
        let parts: Vec<f64> = text
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config {
                field: "weights".into(),
                message: format!("expected a preset name or `w1,w2,w3`, got `{text}`"),
            })?;
        let arr: [f64; 3] = parts.try_into().map_err(|_| Error::Config {
            field: "weights".into(),
            message: format!("expected three weights, got `{text}`"),
        })?;
        Self::new(arr)
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.0).map(|_| ())
    }
}

/// `a_t,j = w_group(j) · q̄_j + a_RL,j`.
pub fn compose_action(a_rl: &[f64], frame: &TargetFrame, w: &ActionWeights, model: &RobotModel) -> Result<Vec<f64>> {
    let nj = model.num_joints();
    check_len("compose_action residual", nj, a_rl.len())?;
    check_len("compose_action reference", nj, frame.q.len())?;
    Ok(model
        .joints
        .iter()
        .enumerate()
        .map(|(j, joint)| w.0[joint.group.index()] * frame.q[j] + a_rl[j])
        .collect())
}
