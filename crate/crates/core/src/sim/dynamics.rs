//! Generalized-coordinate planar dynamics.
//!
//! The equations of motion are assembled from per-body Jacobians:
//! `M = Σ m Jᵀ J + I jωᵀ jω` and `h = Σ m Jᵀ (J̇ q̇ − g)`. Body angles are
//! sums of generalized coordinates, so the angular Jacobians are constant and
//! contribute no velocity-product terms.

use nalgebra::{DMatrix, DVector};

use super::model::RobotModel;

pub(crate) type Vec2 = [f64; 2];

#[inline]
pub(crate) fn rotate(angle: f64, v: Vec2) -> Vec2 {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

#[inline]
fn perp(v: Vec2) -> Vec2 {
    [-v[1], v[0]]
}

#[inline]
fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
fn scale(s: f64, v: Vec2) -> Vec2 {
    [s * v[0], s * v[1]]
}

/// World-frame pose and velocity-product terms of every link.
pub(crate) struct Frames {
    pub origin: Vec<Vec2>,
    pub angle: Vec<f64>,
    pub omega: Vec<f64>,
    /// Origin acceleration with all generalized accelerations set to zero.
    pub bias_acc: Vec<Vec2>,
    /// Joints on the path from the base to each link, base-side first.
    pub chain: Vec<Vec<usize>>,
}

impl Frames {
    /// `pos` and `vel` are full generalized vectors `[x, z, θ, q...]`.
    pub fn compute(model: &RobotModel, pos: &[f64], vel: &[f64]) -> Self {
        let nl = model.num_links();
        let mut origin = Vec::with_capacity(nl);
        let mut angle = Vec::with_capacity(nl);
        let mut omega = Vec::with_capacity(nl);
        let mut bias_acc = Vec::with_capacity(nl);
        let mut chain: Vec<Vec<usize>> = Vec::with_capacity(nl);

        origin.push([pos[0], pos[1]]);
        angle.push(pos[2]);
        omega.push(vel[2]);
        bias_acc.push([0.0, 0.0]);
        chain.push(Vec::new());

        for (j, joint) in model.joints.iter().enumerate() {
            let p = joint.parent;
            let r = rotate(angle[p], joint.anchor);
            origin.push(add(origin[p], r));
            angle.push(angle[p] + joint.axis * pos[3 + j]);
            omega.push(omega[p] + joint.axis * vel[3 + j]);
            bias_acc.push(sub(bias_acc[p], scale(omega[p] * omega[p], r)));
            let mut c = chain[p].clone();
            c.push(j);
            chain.push(c);
        }
        Self {
            origin,
            angle,
            omega,
            bias_acc,
            chain,
        }
    }

    pub fn point_world(&self, link: usize, local: Vec2) -> Vec2 {
        add(self.origin[link], rotate(self.angle[link], local))
    }

    /// Linear-velocity Jacobian of a world point rigidly attached to `link`,
    /// one column per generalized coordinate.
    pub fn point_jacobian(&self, model: &RobotModel, link: usize, point: Vec2, cols: &mut [Vec2]) {
        cols.iter_mut().for_each(|c| *c = [0.0, 0.0]);
        cols[0] = [1.0, 0.0];
        cols[1] = [0.0, 1.0];
        cols[2] = perp(sub(point, self.origin[0]));
        for &j in &self.chain[link] {
            let axis = model.joints[j].axis;
            cols[3 + j] = scale(axis, perp(sub(point, self.origin[j + 1])));
        }
    }

    /// Acceleration of a point on `link` when all generalized accelerations are zero.
    pub fn point_bias_acc(&self, link: usize, point: Vec2) -> Vec2 {
        let w = self.omega[link];
        sub(self.bias_acc[link], scale(w * w, sub(point, self.origin[link])))
    }

    /// Angular-velocity Jacobian row of a link: ones on the base rotation and
    /// the axis signs of its ancestor joints.
    fn angular_jacobian(&self, model: &RobotModel, link: usize, row: &mut [f64]) {
        row.iter_mut().for_each(|r| *r = 0.0);
        row[2] = 1.0;
        for &j in &self.chain[link] {
            row[3 + j] = model.joints[j].axis;
        }
    }
}

/// Mass matrix and combined velocity-product/gravity term `h`, so that
/// `M q̈ + h = Q`.
pub(crate) fn mass_matrix_and_bias(model: &RobotModel, frames: &Frames) -> (DMatrix<f64>, DVector<f64>) {
    let n = model.num_dofs();
    let mut mass = DMatrix::<f64>::zeros(n, n);
    let mut bias = DVector::<f64>::zeros(n);
    let mut jac = vec![[0.0; 2]; n];
    let mut jw = vec![0.0; n];
    for (b, link) in model.links.iter().enumerate() {
        let com = frames.point_world(b, link.com);
        frames.point_jacobian(model, b, com, &mut jac);
        frames.angular_jacobian(model, b, &mut jw);
        let acc = frames.point_bias_acc(b, com);
        let load = [link.mass * acc[0], link.mass * (acc[1] + model.gravity)];
        for r in 0..n {
            let jr = jac[r];
            if jr == [0.0, 0.0] && jw[r] == 0.0 {
                continue;
            }
            bias[r] += jr[0] * load[0] + jr[1] * load[1];
            for c in r..n {
                let jc = jac[c];
                let v = link.mass * (jr[0] * jc[0] + jr[1] * jc[1]) + link.inertia * jw[r] * jw[c];
                mass[(r, c)] += v;
            }
        }
    }
    for r in 0..n {
        for c in 0..r {
            mass[(r, c)] = mass[(c, r)];
        }
    }
    (mass, bias)
}

/// Force at a single ground contact point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PointContact {
    pub link: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    /// `[tangential, normal]`, N
    pub force: Vec2,
}

pub(crate) fn contact_forces(model: &RobotModel, frames: &Frames, vel: &[f64]) -> Vec<PointContact> {
    let n = model.num_dofs();
    let mut jac = vec![[0.0; 2]; n];
    let params = &model.contact;
    let mut out = Vec::new();
    for (b, link) in model.links.iter().enumerate() {
        for &local in &link.contacts {
            let p = frames.point_world(b, local);
            frames.point_jacobian(model, b, p, &mut jac);
            let mut v = [0.0, 0.0];
            for (col, &qd) in jac.iter().zip(vel) {
                v[0] += col[0] * qd;
                v[1] += col[1] * qd;
            }
            let depth = -p[1];
            let mut force = [0.0, 0.0];
            if depth > 0.0 {
                let normal = (params.stiffness * depth - params.damping * v[1]).max(0.0);
                let tangential = -params.friction * normal * (v[0] / params.slip_velocity).tanh();
                force = [tangential, normal];
            }
            out.push(PointContact {
                link: b,
                position: p,
                velocity: v,
                force,
            });
        }
    }
    out
}

/// Adds `Jᵀ f` for a force applied at a world point on `link`.
pub(crate) fn accumulate_point_force(model: &RobotModel, frames: &Frames, link: usize, point: Vec2, force: Vec2, gen: &mut DVector<f64>) {
    let n = model.num_dofs();
    let mut jac = vec![[0.0; 2]; n];
    frames.point_jacobian(model, link, point, &mut jac);
    for (k, col) in jac.iter().enumerate() {
        gen[k] += col[0] * force[0] + col[1] * force[1];
    }
}
