//! Mimic reward, behavioral regulation terms and early termination.

use serde::{Deserialize, Serialize};

use crate::sim::{standing_torso_height, ContactReport, RobotModel, SimState};

/// How the energy penalty collapses `τ` and `q̇` into a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMode {
    /// `|Σ τ_j q̇_j|`, absolute mechanical power.
    #[default]
    Power,
    /// `‖τ ⊙ q̇‖₂`.
    Elementwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Foot force penalty threshold as a multiple of robot weight.
    pub foot_force_body_weights: f64,
    pub energy_mode: EnergyMode,
    /// Multiplier on the energy term; 1 keeps the `−0.1` coefficient as is.
    pub energy_weight: f64,
    pub osc_weight: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            foot_force_body_weights: 2.0,
            energy_mode: EnergyMode::Power,
            energy_weight: 1.0,
            osc_weight: 0.5,
        }
    }
}

impl RewardConfig {
    pub fn force_threshold(&self, model: &RobotModel) -> f64 {
        self.foot_force_body_weights * model.weight()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub mimic: f64,
    pub foot: f64,
    pub smooth: f64,
    pub energy: f64,
    pub osc: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn compose(mimic: f64, foot: f64, smooth: f64, energy: f64, osc: f64, osc_weight: f64) -> Self {
        Self {
            mimic,
            foot,
            smooth,
            energy,
            osc,
            total: mimic + foot + smooth + energy + osc_weight * osc,
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(−‖q − q̄‖²)`
pub fn mimic_reward(q: &[f64], q_ref: &[f64]) -> f64 {
    (-squared_distance(q, q_ref)).exp()
}

/// Penalizes foot forces above `force_threshold` and foot sliding while loaded.
pub fn foot_reward(contacts: &ContactReport, force_threshold: f64) -> f64 {
    contacts
        .feet
        .iter()
        .map(|f| {
            let over = (f.force / force_threshold - 1.0).max(0.0);
            let slip = if f.force > 0.0 {
                f.velocity[0] * f.velocity[0] + f.velocity[1] * f.velocity[1]
            } else {
                0.0
            };
            -over - slip
        })
        .sum()
}

/// `−0.5 ‖a_t − a_{t−1}‖²`
pub fn smooth_reward(action: &[f64], prev_action: &[f64]) -> f64 {
    -0.5 * squared_distance(action, prev_action)
}

pub fn energy_reward(torque: &[f64], qd: &[f64], mode: EnergyMode) -> f64 {
    let magnitude = match mode {
        EnergyMode::Power => torque.iter().zip(qd).map(|(t, v)| t * v).sum::<f64>().abs(),
        EnergyMode::Elementwise => torque.iter().zip(qd).map(|(t, v)| (t * v) * (t * v)).sum::<f64>().sqrt(),
    };
    -0.1 * magnitude
}

/// `exp(−30 (1 − |g_p^z|))`
pub fn osc_reward(gravity_z: f64) -> f64 {
    (-30.0 * (1.0 - gravity_z.abs())).exp()
}

pub struct RewardInputs<'a> {
    pub q: &'a [f64],
    pub q_ref: &'a [f64],
    pub contacts: &'a ContactReport,
    pub force_threshold: f64,
    pub action: &'a [f64],
    pub prev_action: &'a [f64],
    pub torque: &'a [f64],
    pub qd: &'a [f64],
    pub gravity_z: f64,
}

pub fn total_reward(inputs: &RewardInputs<'_>, cfg: &RewardConfig) -> RewardBreakdown {
    RewardBreakdown::compose(
        mimic_reward(inputs.q, inputs.q_ref),
        foot_reward(inputs.contacts, inputs.force_threshold),
        smooth_reward(inputs.action, inputs.prev_action),
        cfg.energy_weight * energy_reward(inputs.torque, inputs.qd, cfg.energy_mode),
        osc_reward(inputs.gravity_z),
        cfg.osc_weight,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Running,
    Fell,
    JointLimit,
    TimeLimit,
}

impl Termination {
    pub fn is_done(self) -> bool {
        self != Termination::Running
    }

    /// Terminal states that end the return with no bootstrap.
    pub fn is_terminal(self) -> bool {
        matches!(self, Termination::Fell | Termination::JointLimit)
    }

    pub fn code(self) -> u8 {
        match self {
            Termination::Running => 0,
            Termination::Fell => 1,
            Termination::JointLimit => 2,
            Termination::TimeLimit => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationConfig {
    /// Fraction of each joint's range, shrunk about its midpoint, that is allowed.
    pub joint_limit_fraction: f64,
    /// Torso center-of-mass height below which the robot counts as fallen, m.
    pub min_torso_height: f64,
    /// Episode length cap in control steps.
    pub max_steps: usize,
}

impl TerminationConfig {
    pub fn for_model(model: &RobotModel, joint_limit_fraction: f64, min_height_fraction: f64, max_steps: usize) -> Self {
        Self {
            joint_limit_fraction,
            min_torso_height: min_height_fraction * standing_torso_height(model),
            max_steps,
        }
    }

    /// Allowed interval for each joint.
    pub fn joint_bounds(&self, model: &RobotModel) -> Vec<(f64, f64)> {
        model
            .joints
            .iter()
            .map(|j| {
                let mid = 0.5 * (j.lower + j.upper);
                let half = 0.5 * (j.upper - j.lower);
                (mid - self.joint_limit_fraction * half, mid + self.joint_limit_fraction * half)
            })
            .collect()
    }
}

/// Priority: joint limit, then fall, then time limit. `steps` is the number
/// of control steps taken so far in the episode.
pub fn check_termination(state: &SimState, model: &RobotModel, cfg: &TerminationConfig, steps: usize) -> Termination {
    if !state.is_finite() {
        return Termination::Fell;
    }
    let violated = cfg
        .joint_bounds(model)
        .into_iter()
        .zip(&state.q)
        .any(|((lo, hi), &q)| q < lo || q > hi);
    if violated {
        Termination::JointLimit
    } else if state.torso_height(model) < cfg.min_torso_height {
        Termination::Fell
    } else if steps >= cfg.max_steps {
        Termination::TimeLimit
    } else {
        Termination::Running
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{base_height_for, FootContact};
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn mimic_examples() {
        assert_eq!(mimic_reward(&[0.2; 6], &[0.2; 6]), 1.0);
        assert!(close(mimic_reward(&[1.0, 0.0], &[0.0, 0.0]), (-1.0f64).exp()));
        let q = [0.1, 0.2, 0.0, 0.0, 0.0, 0.0];
        assert!(close(mimic_reward(&q, &[0.0; 6]), 0.951229424500714));
    }

    #[test]
    fn foot_examples() {
        let foot = |force: f64, v2: f64| FootContact {
            force,
            velocity: [v2.sqrt(), 0.0],
            in_contact: force > 0.0,
        };
        let airborne = ContactReport {
            feet: vec![foot(0.0, 4.0), foot(0.0, 1.0)],
        };
        assert_eq!(foot_reward(&airborne, 100.0), 0.0);
        let boundary = ContactReport {
            feet: vec![foot(100.0, 0.0), foot(0.0, 0.0)],
        };
        assert_eq!(foot_reward(&boundary, 100.0), 0.0);
        let heavy = ContactReport {
            feet: vec![foot(200.0, 0.04), foot(0.0, 0.0)],
        };
        assert!(close(foot_reward(&heavy, 100.0), -1.04));
    }

    #[test]
    fn smooth_energy_osc_examples() {
        assert_eq!(smooth_reward(&[0.3; 6], &[0.3; 6]), 0.0);
        assert!(close(smooth_reward(&[1.0, 1.0], &[0.0, 0.0]), -1.0));
        assert!(close(smooth_reward(&[0.1; 6], &[0.0; 6]), -0.03));

        assert_eq!(energy_reward(&[3.0; 6], &[0.0; 6], EnergyMode::Power), 0.0);
        assert!(close(energy_reward(&[1.0, 0.0], &[2.0, 0.0], EnergyMode::Power), -0.2));
        assert!(close(energy_reward(&[1.0, 2.0, -1.0], &[-0.5, -1.0, 1.0], EnergyMode::Power), -0.35));

        assert_eq!(osc_reward(1.0), 1.0);
        assert_eq!(osc_reward(-1.0), 1.0);
        assert!(close(osc_reward(0.0), (-30.0f64).exp()));
        assert!((osc_reward(0.0) - 9.357623e-14).abs() < 1e-19);
        assert!(close(osc_reward(0.95), (-1.5f64).exp()));
        assert!(close(osc_reward(-0.95), 0.22313016014842982));
    }

    #[test]
    fn total_examples() {
        let airborne = ContactReport {
            feet: vec![FootContact::default(); 2],
        };
        let q = [0.1; 6];
        let inputs = RewardInputs {
            q: &q,
            q_ref: &q,
            contacts: &airborne,
            force_threshold: 400.0,
            action: &q,
            prev_action: &q,
            torque: &[0.0; 6],
            qd: &[0.0; 6],
            gravity_z: -1.0,
        };
        let r = total_reward(&inputs, &RewardConfig::default());
        assert_eq!(r.total, 1.5);

        let r = RewardBreakdown::compose(0.9512, -1.04, -0.03, -0.35, 0.2231, 0.5);
        assert!((r.total - (-0.35725)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn penalties_non_positive_and_total_is_sum(
            q in prop::collection::vec(-2.0..2.0f64, 6),
            qr in prop::collection::vec(-2.0..2.0f64, 6),
            a in prop::collection::vec(-2.0..2.0f64, 6),
            tau in prop::collection::vec(-100.0..100.0f64, 6),
            force in 0.0..2000.0f64,
            vel in -3.0..3.0f64,
            gz in -1.0..1.0f64,
        ) {
            let contacts = ContactReport { feet: vec![FootContact { force, velocity: [vel, 0.1], in_contact: force > 0.0 }] };
            let inputs = RewardInputs {
                q: &q, q_ref: &qr, contacts: &contacts, force_threshold: 400.0,
                action: &a, prev_action: &qr, torque: &tau, qd: &q, gravity_z: gz,
            };
            for mode in [EnergyMode::Power, EnergyMode::Elementwise] {
                let cfg = RewardConfig { energy_mode: mode, ..RewardConfig::default() };
                let r = total_reward(&inputs, &cfg);
                prop_assert!(r.foot <= 0.0 && r.smooth <= 0.0 && r.energy <= 0.0);
                prop_assert!(r.mimic > 0.0 && r.mimic <= 1.0);
                prop_assert!(r.osc > 0.0 && r.osc <= 1.0);
                prop_assert_eq!(r.total, r.mimic + r.foot + r.smooth + r.energy + 0.5 * r.osc);
            }
        }

        #[test]
        fn mimic_strictly_decreasing(d in 0.0..3.0f64, extra in 1e-6..1.0f64) {
            prop_assert!(mimic_reward(&[d + extra], &[0.0]) < mimic_reward(&[d], &[0.0]));
        }
    }

    fn symmetric_model() -> RobotModel {
        let mut m = RobotModel::planar_walker();
        for j in &mut m.joints {
            j.lower = -1.0;
            j.upper = 1.0;
        }
        m
    }

    fn upright(model: &RobotModel) -> SimState {
        let mut s = SimState::zeros(model.num_joints());
        s.base_pos[1] = base_height_for(model, &s.q);
        s
    }

    #[test]
    fn termination_boundaries() {
        let m = symmetric_model();
        let cfg = TerminationConfig::for_model(&m, 0.95, 0.6, 1000);
        let mut s = upright(&m);
        assert_eq!(check_termination(&s, &m, &cfg, 0), Termination::Running);
        s.q[1] = 0.95;
        assert_eq!(check_termination(&s, &m, &cfg, 0), Termination::Running);
        s.q[1] = 0.95 + 1e-6;
        assert_eq!(check_termination(&s, &m, &cfg, 0), Termination::JointLimit);
        s.q[1] = -0.95 - 1e-6;
        assert_eq!(check_termination(&s, &m, &cfg, 0), Termination::JointLimit);
    }

    #[test]
    fn termination_priorities() {
        let m = RobotModel::planar_walker();
        let cfg = TerminationConfig::for_model(&m, 0.95, 0.6, 10);
        let mut s = upright(&m);
        assert_eq!(check_termination(&s, &m, &cfg, 10), Termination::TimeLimit);
        s.base_pos[1] = 0.1;
        assert_eq!(check_termination(&s, &m, &cfg, 10), Termination::Fell);
        s.q[0] = 1.59;
        assert_eq!(check_termination(&s, &m, &cfg, 10), Termination::JointLimit);
        s.q[0] = f64::NAN;
        assert_eq!(check_termination(&s, &m, &cfg, 0), Termination::Fell);
    }

    #[test]
    fn asymmetric_limits_shrink_about_midpoint() {
        let m = RobotModel::planar_walker();
        let cfg = TerminationConfig::for_model(&m, 0.95, 0.6, 10);
        // knee limits [-2.0, 0.3]: midpoint -0.85, half-width 1.15
        let (lo, hi) = cfg.joint_bounds(&m)[1];
        assert!((lo - (-0.85 - 0.95 * 1.15)).abs() < 1e-12);
        assert!((hi - (-0.85 + 0.95 * 1.15)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn symmetric_limits_terminate_iff_abs_exceeds(q in -1.2..1.2f64, joint in 0usize..6) {
            let m = symmetric_model();
            let cfg = TerminationConfig::for_model(&m, 0.95, 0.0, 1000);
            let mut s = upright(&m);
            s.q[joint] = q;
            let t = check_termination(&s, &m, &cfg, 0);
            prop_assert_eq!(t == Termination::JointLimit, q.abs() > 0.95);
        }

        #[test]
        fn termination_monotone_in_violation(q in 0.0..1.2f64, extra in 0.0..0.5f64) {
            let m = symmetric_model();
            let cfg = TerminationConfig::for_model(&m, 0.95, 0.0, 1000);
            let mut s = upright(&m);
            s.q[2] = q;
            let a = check_termination(&s, &m, &cfg, 0);
            s.q[2] = q + extra;
            let b = check_termination(&s, &m, &cfg, 0);
            prop_assert!(a != Termination::JointLimit || b == Termination::JointLimit);
        }
    }
}
