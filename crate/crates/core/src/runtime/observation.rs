use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::motion::{MirrorSpec, TargetFrame};
use crate::sim::{gravity_projection, RobotModel, SimState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsField {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Index table of the flat observation vector:
/// `ω ⊕ g_p ⊕ q ⊕ q̇ ⊕ a_prev ⊕ q̄ ⊕ (q̄ − q)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsLayout {
    pub num_joints: usize,
    pub dim: usize,
    pub fields: Vec<ObsField>,
}

impl ObsLayout {
    pub fn new(num_joints: usize) -> Self {
        let spec = [
            ("base_angular_velocity", 1),
            ("gravity_projection", 2),
            ("joint_position", num_joints),
            ("joint_velocity", num_joints),
            ("previous_action", num_joints),
            ("reference_position", num_joints),
            ("reference_error", num_joints),
        ];
        let mut fields = Vec::with_capacity(spec.len());
        let mut start = 0;
        for (name, len) in spec {
            fields.push(ObsField {
                name: name.to_string(),
                start,
                len,
            });
            start += len;
        }
        Self {
            num_joints,
            dim: start,
            fields,
        }
    }

    pub fn field(&self, name: &str) -> Option<&ObsField> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("bad observation layout: {e}")))
    }
}

pub fn build_observation(state: &SimState, prev_action: &[f64], frame: &TargetFrame) -> Result<Vec<f64>> {
    let nj = state.q.len();
    check_len("observation previous action", nj, prev_action.len())?;
    check_len("observation reference", nj, frame.q.len())?;
    let g = gravity_projection(state);
    let mut obs = Vec::with_capacity(3 + 5 * nj);
    obs.push(state.base_omega);
    obs.extend_from_slice(&g);
    obs.extend_from_slice(&state.q);
    obs.extend_from_slice(&state.qd);
    obs.extend_from_slice(prev_action);
    obs.extend_from_slice(&frame.q);
    obs.extend(frame.q.iter().zip(&state.q).map(|(r, q)| r - q));
    Ok(obs)
}

/// Left/right mirror operators derived from the joints' `mirror` pairing.
/// Base pitch rate and gravity projection lie in the sagittal plane and are
/// left unchanged.
pub fn mirror_spec(model: &RobotModel) -> Result<MirrorSpec> {
    let nj = model.num_joints();
    let mut perm = Vec::with_capacity(nj);
    let mut sign = Vec::with_capacity(nj);
    for joint in &model.joints {
        let j = model
            .joint_index(&joint.mirror)
            .ok_or_else(|| Error::InvalidModel(format!("joint `{}` mirrors unknown joint `{}`", joint.name, joint.mirror)))?;
        perm.push(j);
        sign.push(joint.mirror_sign);
    }
    let layout = ObsLayout::new(nj);
    let mut state_perm: Vec<usize> = (0..layout.dim).collect();
    let mut state_sign = vec![1.0; layout.dim];
    for field in layout.fields.iter().filter(|f| f.len == nj && f.start >= 3) {
        for i in 0..nj {
            state_perm[field.start + i] = field.start + perm[i];
            state_sign[field.start + i] = sign[i];
        }
    }
    MirrorSpec::new(state_perm, state_sign, perm, sign)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_walker_dimension() {
        let layout = ObsLayout::new(6);
        assert_eq!(layout.dim, 33);
        assert_eq!(layout.field("reference_error").unwrap().start, 27);
        // 3D analogue: ω ∈ R³, g_p ∈ R³ and 23 joints give 75 + 46 = 121.
        let (omega, grav, nj) = (3, 3, 23);
        assert_eq!(omega + grav + 3 * nj + 2 * nj, 121);
    }

    #[test]
    fn perfect_tracking_has_zero_error_block() {
        let model = RobotModel::planar_walker();
        let mut state = SimState::zeros(6);
        state.q = vec![0.1, -0.2, 0.1, 0.0, 0.3, -0.1];
        let mut frame = TargetFrame::standing(6);
        frame.q = state.q.clone();
        let obs = build_observation(&state, &[0.0; 6], &frame).unwrap();
        assert_eq!(obs.len(), ObsLayout::new(model.num_joints()).dim);
        assert_eq!(&obs[27..], &[0.0; 6]);
        assert_eq!(&obs[1..3], &[-0.0, -1.0]);
    }

    #[test]
    fn mirror_swaps_leg_blocks() {
        let model = RobotModel::planar_walker();
        let spec = mirror_spec(&model).unwrap();
        let obs: Vec<f64> = (0..33).map(|i| i as f64).collect();
        let m = spec.mirror_observation(&obs).unwrap();
        assert_eq!(&m[..3], &[0.0, 1.0, 2.0]);
        assert_eq!(&m[3..9], &[6.0, 7.0, 8.0, 3.0, 4.0, 5.0]);
        assert_eq!(spec.mirror_observation(&m).unwrap(), obs);
        assert_eq!(spec.mirror_action(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(), vec![4.0, 5.0, 6.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn layout_json_round_trip() {
        let layout = ObsLayout::new(6);
        assert_eq!(ObsLayout::from_json(&layout.to_json()).unwrap(), layout);
    }
}
