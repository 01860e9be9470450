//! Deterministic planar rigid-body simulation of an articulated walker.

mod dynamics;
pub mod model;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::motion::TargetFrame;

use dynamics::{accumulate_point_force, contact_forces, mass_matrix_and_bias, Frames};
pub use model::{ContactParams, Joint, JointGroup, Link, RobotModel, STANDARD_GRAVITY};

/// Physics step used throughout: 1000 Hz.
pub const PHYSICS_DT: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Base (torso frame origin) position `[x, z]`, m.
    pub base_pos: [f64; 2],
    /// Base pitch, rad.
    pub base_angle: f64,
    pub base_vel: [f64; 2],
    pub base_omega: f64,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub time: f64,
}

impl SimState {
    pub fn zeros(nj: usize) -> Self {
        Self {
            base_pos: [0.0, 0.0],
            base_angle: 0.0,
            base_vel: [0.0, 0.0],
            base_omega: 0.0,
            q: vec![0.0; nj],
            qd: vec![0.0; nj],
            time: 0.0,
        }
    }

    fn generalized_position(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 + self.q.len());
        v.extend_from_slice(&[self.base_pos[0], self.base_pos[1], self.base_angle]);
        v.extend_from_slice(&self.q);
        v
    }

    fn generalized_velocity(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 + self.qd.len());
        v.extend_from_slice(&[self.base_vel[0], self.base_vel[1], self.base_omega]);
        v.extend_from_slice(&self.qd);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.base_pos.iter().chain(&self.base_vel).all(|v| v.is_finite())
            && self.base_angle.is_finite()
            && self.base_omega.is_finite()
            && self.q.iter().chain(&self.qd).all(|v| v.is_finite())
    }

    /// Height of the torso center of mass above the ground.
    pub fn torso_height(&self, model: &RobotModel) -> f64 {
        let com = dynamics::rotate(self.base_angle, model.links[0].com);
        self.base_pos[1] + com[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FootContact {
    /// Total normal force, N.
    pub force: f64,
    /// Mean planar velocity of the foot's contact points, m/s.
    pub velocity: [f64; 2],
    pub in_contact: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactReport {
    pub feet: Vec<FootContact>,
}

/// A force applied at a point of a link for the duration of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalForce {
    pub link: usize,
    /// Application point in the link frame, m.
    pub point: [f64; 2],
    /// World-frame force `[fx, fz]`, N.
    pub force: [f64; 2],
}

/// Simplified impedance law `τ = Kp (q_tgt − q) − Kd q̇`, clamped to the
/// torque limits.
pub fn pd_torque(q_target: &[f64], q: &[f64], qd: &[f64], model: &RobotModel) -> Result<Vec<f64>> {
    let nj = model.num_joints();
    check_len("pd_torque target", nj, q_target.len())?;
    check_len("pd_torque position", nj, q.len())?;
    check_len("pd_torque velocity", nj, qd.len())?;
    Ok(model
        .joints
        .iter()
        .enumerate()
        .map(|(j, joint)| {
            let raw = joint.kp * (q_target[j] - q[j]) - joint.kd * qd[j];
            raw.clamp(-joint.torque_limit, joint.torque_limit)
        })
        .collect())
}

/// Advances one semi-implicit Euler step: velocities first, then positions
/// from the updated velocities.
pub fn step(model: &RobotModel, state: &SimState, torque: &[f64], dt: f64) -> Result<(SimState, ContactReport)> {
    step_with_forces(model, state, torque, dt, &[])
}

pub fn step_with_forces(
    model: &RobotModel,
    state: &SimState,
    torque: &[f64],
    dt: f64,
    external: &[ExternalForce],
) -> Result<(SimState, ContactReport)> {
    let nj = model.num_joints();
    check_len("step torque", nj, torque.len())?;
    check_len("step state", nj, state.q.len())?;
    let n = model.num_dofs();
    let pos = state.generalized_position();
    let vel = state.generalized_velocity();
    let frames = Frames::compute(model, &pos, &vel);
    let (mass, bias) = mass_matrix_and_bias(model, &frames);

    let mut rhs = -bias;
    for (j, &t) in torque.iter().enumerate() {
        rhs[3 + j] += t;
    }
    for c in contact_forces(model, &frames, &vel) {
        if c.force != [0.0, 0.0] {
            accumulate_point_force(model, &frames, c.link, c.position, c.force, &mut rhs);
        }
    }
    for f in external {
        let p = frames.point_world(f.link, f.point);
        accumulate_point_force(model, &frames, f.link, p, f.force, &mut rhs);
    }

    let acc = if model.fixed_base {
        let sub_mass = mass.view((3, 3), (nj, nj)).clone_owned();
        let sub_rhs = rhs.rows(3, nj).clone_owned();
        let sol = solve_spd(sub_mass, sub_rhs, state.time)?;
        let mut acc = DVector::zeros(n);
        acc.rows_mut(3, nj).copy_from(&sol);
        acc
    } else {
        solve_spd(mass, rhs, state.time)?
    };

    let mut new_vel = vel;
    let mut new_pos = pos;
    for k in 0..n {
        new_vel[k] += dt * acc[k];
        new_pos[k] += dt * new_vel[k];
    }

    let next = SimState {
        base_pos: [new_pos[0], new_pos[1]],
        base_angle: new_pos[2],
        base_vel: [new_vel[0], new_vel[1]],
        base_omega: new_vel[2],
        q: new_pos[3..].to_vec(),
        qd: new_vel[3..].to_vec(),
        time: state.time + dt,
    };
    if !next.is_finite() {
        return Err(Error::SimulationDiverged { time: next.time });
    }
    let report = contact_report(model, &next);
    Ok((next, report))
}

fn solve_spd(mass: nalgebra::DMatrix<f64>, rhs: DVector<f64>, time: f64) -> Result<DVector<f64>> {
    match mass.cholesky() {
        Some(chol) => Ok(chol.solve(&rhs)),
        None => Err(Error::SimulationDiverged { time }),
    }
}

/// Foot forces and velocities evaluated at `state`.
pub fn contact_report(model: &RobotModel, state: &SimState) -> ContactReport {
    let pos = state.generalized_position();
    let vel = state.generalized_velocity();
    let frames = Frames::compute(model, &pos, &vel);
    let contacts = contact_forces(model, &frames, &vel);
    let feet = model
        .foot_links()
        .into_iter()
        .map(|link| {
            let mut force = 0.0;
            let mut velocity = [0.0, 0.0];
            let mut count = 0usize;
            for c in contacts.iter().filter(|c| c.link == link) {
                force += c.force[1];
                velocity[0] += c.velocity[0];
                velocity[1] += c.velocity[1];
                count += 1;
            }
            if count > 0 {
                velocity = [velocity[0] / count as f64, velocity[1] / count as f64];
            }
            FootContact {
                force,
                velocity,
                in_contact: force > 0.0,
            }
        })
        .collect();
    ContactReport { feet }
}

/// World gravity direction expressed in the torso frame, `[x, z]`.
///
/// Upright gives `[0, -1]`.
pub fn gravity_projection(state: &SimState) -> [f64; 2] {
    let (s, c) = state.base_angle.sin_cos();
    [-s, -c]
}

/// Kinetic plus gravitational potential energy, J.
pub fn mechanical_energy(model: &RobotModel, state: &SimState) -> f64 {
    let pos = state.generalized_position();
    let vel = state.generalized_velocity();
    let frames = Frames::compute(model, &pos, &vel);
    let (mass, _) = mass_matrix_and_bias(model, &frames);
    let v = DVector::from_vec(vel);
    let kinetic = 0.5 * v.dot(&(&mass * &v));
    let potential: f64 = model
        .links
        .iter()
        .enumerate()
        .map(|(b, l)| l.mass * model.gravity * frames.point_world(b, l.com)[1])
        .sum();
    kinetic + potential
}

/// World positions of every contact point.
pub fn contact_points(model: &RobotModel, state: &SimState) -> Vec<[f64; 2]> {
    let pos = state.generalized_position();
    let vel = state.generalized_velocity();
    let frames = Frames::compute(model, &pos, &vel);
    model
        .links
        .iter()
        .enumerate()
        .flat_map(|(b, l)| l.contacts.iter().map(move |&c| (b, c)))
        .map(|(b, c)| frames.point_world(b, c))
        .collect()
}

/// Base height at which the lowest contact point touches the ground for the
/// given joint configuration with an upright torso.
pub fn base_height_for(model: &RobotModel, q: &[f64]) -> f64 {
    let mut probe = SimState::zeros(model.num_joints());
    probe.q.copy_from_slice(q);
    let lowest = contact_points(model, &probe)
        .into_iter()
        .map(|p| p[1])
        .fold(f64::INFINITY, f64::min);
    if lowest.is_finite() {
        (-lowest).max(0.0)
    } else {
        0.0
    }
}

/// Torso center-of-mass height when standing with all joints at zero.
pub fn standing_torso_height(model: &RobotModel) -> f64 {
    let mut s = SimState::zeros(model.num_joints());
    s.base_pos[1] = base_height_for(model, &s.q.clone());
    s.torso_height(model)
}

/// Reference-state initialization: upright base at nominal height with the
/// frame's joint positions and velocities, plus uniform noise on `q`.
pub fn reset<R: Rng + ?Sized>(model: &RobotModel, frame: &TargetFrame, noise: f64, rng: &mut R) -> Result<SimState> {
    let nj = model.num_joints();
    check_len("reset frame", nj, frame.q.len())?;
    let mut state = SimState::zeros(nj);
    state.q.copy_from_slice(&frame.q);
    state.qd.copy_from_slice(&frame.qd);
    if noise > 0.0 {
        for q in &mut state.q {
            *q += rng.random_range(-noise..=noise);
        }
    }
    state.base_pos[1] = base_height_for(model, &state.q);
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pendulum(gravity: f64) -> RobotModel {
        let text = format!(
            r#"
            gravity = {gravity}
            fixed_base = true
            feet = []
            [[link]]
            name = "base"
            mass = 1.0
            inertia = 1.0
            length = 0.1
            com = [0.0, 0.0]
            [[link]]
            name = "bob"
            mass = 2.0
            inertia = 0.05
            length = 1.0
            com = [0.0, -0.8]
            [[joint]]
            name = "pivot"
            parent = 0
            anchor = [0.0, 0.0]
            lower = -10.0
            upper = 10.0
            torque_limit = 100.0
            kp = 0.0
            kd = 0.0
            group = "upper"
            mirror = "pivot"
            "#
        );
        RobotModel::from_toml_str(&text).unwrap()
    }

    #[test]
    fn pd_torque_equilibrium_and_clamp() {
        let mut m = pendulum(0.0);
        let q = [0.3];
        assert_eq!(pd_torque(&q, &q, &[0.0], &m).unwrap(), vec![0.0]);

        m.joints[0].kp = 1.0;
        m.joints[0].kd = 0.0;
        assert_eq!(pd_torque(&[0.3], &[0.0], &[0.0], &m).unwrap(), vec![0.3]);

        m.joints[0].kp = 50.0;
        m.joints[0].kd = 2.0;
        m.joints[0].torque_limit = 3.0;
        // raw = 50·0.1 − 2·0.5 = 4.0, clamped to 3.0
        assert_eq!(pd_torque(&[0.1], &[0.0], &[0.5], &m).unwrap(), vec![3.0]);
        assert_eq!(pd_torque(&[-0.1], &[0.0], &[-0.5], &m).unwrap(), vec![-3.0]);
    }

    #[test]
    fn pd_torque_rejects_wrong_length() {
        let m = pendulum(0.0);
        assert!(matches!(pd_torque(&[0.0, 0.0], &[0.0], &[0.0], &m), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_gravity_rest_state_is_stationary() {
        let mut m = RobotModel::planar_walker();
        m.gravity = 0.0;
        let mut s = SimState::zeros(6);
        s.base_pos = [0.0, 2.0];
        let (next, report) = step(&m, &s, &[0.0; 6], PHYSICS_DT).unwrap();
        let mut expected = s.clone();
        expected.time += PHYSICS_DT;
        assert_eq!(next, expected);
        assert!(report.feet.iter().all(|f| f.force == 0.0 && !f.in_contact));
    }

    #[test]
    fn free_fall_velocity_decrement() {
        let m = RobotModel::planar_walker();
        let mut s = SimState::zeros(6);
        s.base_pos = [0.0, 3.0];
        let (next, _) = step(&m, &s, &[0.0; 6], PHYSICS_DT).unwrap();
        assert!((next.base_vel[1] + 0.00981).abs() < 1e-12);
        assert!(next.base_vel[0].abs() < 1e-12);
    }

    #[test]
    fn step_is_bitwise_deterministic() {
        let m = RobotModel::planar_walker();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frame = TargetFrame::standing(6);
        let s = reset(&m, &frame, 0.05, &mut rng).unwrap();
        let tau = [5.0, -3.0, 1.0, 2.0, 0.5, -1.0];
        let a = step(&m, &s, &tau, PHYSICS_DT).unwrap();
        let b = step(&m, &s, &tau, PHYSICS_DT).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gravity_projection_examples() {
        let mut s = SimState::zeros(1);
        assert_eq!(gravity_projection(&s), [0.0, -1.0]);
        s.base_angle = std::f64::consts::FRAC_PI_2;
        assert!(gravity_projection(&s)[1].abs() < 1e-15);
        s.base_angle = std::f64::consts::FRAC_PI_6;
        let gp = gravity_projection(&s);
        // Rotating the world vector (0, −1) into a frame pitched by π/6.
        let c = std::f64::consts::FRAC_PI_6.cos();
        let s6 = std::f64::consts::FRAC_PI_6.sin();
        assert!((gp[0] - (-s6)).abs() < 1e-15);
        assert!((gp[1].abs() - 0.8660254037844386).abs() < 1e-12);
        assert!((gp[1] + c).abs() < 1e-15);
    }

    #[test]
    fn passive_pendulum_conserves_energy() {
        let m = pendulum(STANDARD_GRAVITY);
        let mut s = SimState::zeros(1);
        s.q[0] = 1.0;
        // Closed form for a single pendulum about a fixed pivot.
        let bob = &m.links[1];
        let lc = 0.8;
        let energy = |s: &SimState| {
            0.5 * (bob.mass * lc * lc + bob.inertia) * s.qd[0] * s.qd[0] - bob.mass * STANDARD_GRAVITY * lc * s.q[0].cos()
        };
        let e0 = energy(&s);
        let mut max_drift: f64 = 0.0;
        for _ in 0..1000 {
            s = step(&m, &s, &[0.0], PHYSICS_DT).unwrap().0;
            max_drift = max_drift.max((energy(&s) - e0).abs());
            assert!((mechanical_energy(&m, &s) - energy(&s)).abs() < 1e-9);
        }
        assert!(max_drift < 0.01 * e0.abs(), "drift {max_drift} vs {e0}");
    }

    #[test]
    fn reset_noise_contract() {
        let m = RobotModel::planar_walker();
        let frame = TargetFrame::standing(6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = reset(&m, &frame, 0.0, &mut rng).unwrap();
        assert_eq!(s.q, frame.q);

        let a = reset(&m, &frame, 0.01, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = reset(&m, &frame, 0.01, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut max_dev: f64 = 0.0;
        for _ in 0..10_000 {
            let s = reset(&m, &frame, 0.01, &mut rng).unwrap();
            for (q, q0) in s.q.iter().zip(&frame.q) {
                max_dev = max_dev.max((q - q0).abs());
            }
        }
        assert!(max_dev <= 0.01);
        assert!(max_dev > 0.009);
    }

    #[test]
    fn contact_force_non_negative_and_zero_above_ground() {
        let m = RobotModel::planar_walker();
        let mut s = SimState::zeros(6);
        s.base_pos[1] = base_height_for(&m, &s.q) + 0.01;
        let r = contact_report(&m, &s);
        assert!(r.feet.iter().all(|f| f.force == 0.0 && !f.in_contact));
        s.base_pos[1] -= 0.02;
        s.base_vel[1] = 5.0;
        let r = contact_report(&m, &s);
        assert!(r.feet.iter().all(|f| f.force >= 0.0));
    }

    /// Linear momentum and angular momentum about the world origin.
    fn momentum(model: &RobotModel, state: &SimState) -> ([f64; 2], f64) {
        let pos = state.generalized_position();
        let vel = state.generalized_velocity();
        let frames = Frames::compute(model, &pos, &vel);
        let mut jac = vec![[0.0; 2]; model.num_dofs()];
        let (mut p, mut l) = ([0.0, 0.0], 0.0);
        for (b, link) in model.links.iter().enumerate() {
            let c = frames.point_world(b, link.com);
            frames.point_jacobian(model, b, c, &mut jac);
            let v = jac.iter().zip(&vel).fold([0.0, 0.0], |acc, (col, qd)| [acc[0] + col[0] * qd, acc[1] + col[1] * qd]);
            p[0] += link.mass * v[0];
            p[1] += link.mass * v[1];
            l += link.mass * (c[0] * v[1] - c[1] * v[0]) + link.inertia * frames.omega[b];
        }
        (p, l)
    }

    #[test]
    fn free_floating_momentum_error_is_first_order() {
        let mut m = RobotModel::planar_walker();
        m.gravity = 0.0;
        let mut s0 = SimState::zeros(6);
        s0.base_pos[1] = 5.0;
        s0.base_vel = [0.3, -0.2];
        s0.base_omega = 0.4;
        s0.qd = vec![0.5, -1.0, 0.2, -0.3, 0.8, 0.1];
        let (p0, l0) = momentum(&m, &s0);
        let drift = |dt: f64| {
            let mut s = s0.clone();
            for k in 0..(0.5 / dt).round() as usize {
                let t = k as f64 * dt;
                let tau: Vec<f64> = (0..6).map(|j| (3.0 * t + j as f64).sin()).collect();
                s = step(&m, &s, &tau, dt).unwrap().0;
            }
            let (p, l) = momentum(&m, &s);
            (p[0] - p0[0]).abs() + (p[1] - p0[1]).abs() + (l - l0).abs()
        };
        let (coarse, fine) = (drift(1e-3), drift(5e-4));
        assert!(coarse < 0.01 * (p0[0].abs() + p0[1].abs() + l0.abs()));
        // Internal torques leave momentum untouched; what remains is O(dt) integration error.
        assert!((fine / coarse - 0.5).abs() < 0.1, "ratio {}", fine / coarse);
    }
}
