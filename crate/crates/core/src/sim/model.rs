//! Articulated planar robot description.
//!
//! Link 0 is the floating base (the torso). Joint `j` connects its `parent`
//! link to link `j + 1`, so the kinematic tree is acyclic by construction as
//! long as every parent index is smaller than the child index.
//!
//! Every link frame has its origin at the joint that carries it. Positions in
//! link frames are `[x, z]` pairs; a positive joint angle rotates `x` toward
//! `z` (counter-clockwise with `x` forward and `z` up).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STANDARD_GRAVITY: f64 = 9.81;

/// Which part of the body a joint belongs to when the open-loop action is
/// reweighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointGroup {
    LeftLower,
    RightLower,
    Upper,
}

impl JointGroup {
    pub fn index(self) -> usize {
        match self {
            JointGroup::LeftLower => 0,
            JointGroup::RightLower => 1,
            JointGroup::Upper => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub name: String,
    /// kg
    pub mass: f64,
    /// Rotational inertia about the center of mass, kg·m².
    pub inertia: f64,
    /// m
    pub length: f64,
    /// Center of mass in the link frame, m.
    pub com: [f64; 2],
    /// Ground contact points in the link frame, m.
    #[serde(default)]
    pub contacts: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Joint {
    pub name: String,
    /// Index of the parent link; the child is always link `joint index + 1`.
    pub parent: usize,
    /// Joint position in the parent link frame, m.
    pub anchor: [f64; 2],
    /// +1 or -1; flips the positive rotation direction.
    #[serde(default = "default_axis")]
    pub axis: f64,
    pub lower: f64,
    pub upper: f64,
    pub torque_limit: f64,
    pub kp: f64,
    pub kd: f64,
    pub group: JointGroup,
    /// Name of the joint this one maps to under sagittal mirroring.
    pub mirror: String,
    #[serde(default = "default_axis")]
    pub mirror_sign: f64,
}

fn default_axis() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactParams {
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
    pub friction: f64,
    /// Tangential velocity scale of the smoothed Coulomb law, m/s.
    pub slip_velocity: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness: 1.0e4,
            damping: 100.0,
            friction: 1.0,
            slip_velocity: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModel {
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    /// Pins the base in place; used for tracking checks without balance.
    #[serde(default)]
    pub fixed_base: bool,
    /// Names of the links treated as feet in contact reports.
    pub feet: Vec<String>,
    #[serde(default)]
    pub contact: ContactParams,
    #[serde(rename = "link")]
    pub links: Vec<Link>,
    #[serde(rename = "joint")]
    pub joints: Vec<Joint>,
}

fn default_gravity() -> f64 {
    STANDARD_GRAVITY
}

impl RobotModel {
    /// Planar biped: torso, two thighs, two shanks and two short feet, with
    /// hips, knees and ankles actuated (NJ = 6).
    pub fn planar_walker() -> Self {
        let link = |name: &str, mass, inertia, length, com: [f64; 2], contacts: Vec<[f64; 2]>| Link {
            name: name.to_string(),
            mass,
            inertia,
            length,
            com,
            contacts,
        };
        let foot_contacts = vec![[-0.08, -0.06], [0.16, -0.06]];
        let links = vec![
            link("torso", 10.0, 0.25, 0.5, [0.0, 0.15], vec![]),
            link("left_thigh", 1.5, 0.0225, 0.4, [0.0, -0.2], vec![]),
            link("left_shank", 1.0, 0.015, 0.4, [0.0, -0.2], vec![]),
            link("left_foot", 0.4, 0.003, 0.24, [0.04, -0.04], foot_contacts.clone()),
            link("right_thigh", 1.5, 0.0225, 0.4, [0.0, -0.2], vec![]),
            link("right_shank", 1.0, 0.015, 0.4, [0.0, -0.2], vec![]),
            link("right_foot", 0.4, 0.003, 0.24, [0.04, -0.04], foot_contacts),
        ];
        let joint = |name: &str, parent, anchor: [f64; 2], limits: (f64, f64), tau, kp, kd, group, mirror: &str| Joint {
            name: name.to_string(),
            parent,
            anchor,
            axis: 1.0,
            lower: limits.0,
            upper: limits.1,
            torque_limit: tau,
            kp,
            kd,
            group,
            mirror: mirror.to_string(),
            mirror_sign: 1.0,
        };
        use JointGroup::{LeftLower, RightLower};
        let hip = (-1.2, 1.6);
        let knee = (-2.0, 0.3);
        let ankle = (-1.0, 1.2);
        let joints = vec![
            joint("left_hip", 0, [0.0, 0.0], hip, 250.0, 4800.0, 36.0, LeftLower, "right_hip"),
            joint("left_knee", 1, [0.0, -0.4], knee, 250.0, 1800.0, 15.0, LeftLower, "right_knee"),
            joint("left_ankle", 2, [0.0, -0.4], ankle, 80.0, 360.0, 1.8, LeftLower, "right_ankle"),
            joint("right_hip", 0, [0.0, 0.0], hip, 250.0, 4800.0, 36.0, RightLower, "left_hip"),
            joint("right_knee", 4, [0.0, -0.4], knee, 250.0, 1800.0, 15.0, RightLower, "left_knee"),
            joint("right_ankle", 5, [0.0, -0.4], ankle, 80.0, 360.0, 1.8, RightLower, "left_ankle"),
        ];
        Self {
            gravity: STANDARD_GRAVITY,
            fixed_base: false,
            feet: vec!["left_foot".into(), "right_foot".into()],
            contact: ContactParams::default(),
            links,
            joints,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let model: RobotModel = toml::from_str(text).map_err(|e| Error::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("robot model always serializes")
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    /// Generalized coordinates: planar base (x, z, θ) followed by the joints.
    pub fn num_dofs(&self) -> usize {
        3 + self.joints.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn weight(&self) -> f64 {
        self.total_mass() * self.gravity
    }

    pub fn foot_links(&self) -> Vec<usize> {
        self.feet
            .iter()
            .map(|f| self.links.iter().position(|l| &l.name == f).expect("validated foot name"))
            .collect()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn torque_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.torque_limit).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if self.joints.is_empty() {
            return bad("at least one joint is required".into());
        }
        if self.links.len() != self.joints.len() + 1 {
            return bad(format!(
                "expected {} links for {} joints, found {}",
                self.joints.len() + 1,
                self.joints.len(),
                self.links.len()
            ));
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return bad(format!("gravity must be finite and non-negative, got {}", self.gravity));
        }
        for link in &self.links {
            if !(link.mass > 0.0 && link.inertia > 0.0) {
                return bad(format!("link `{}` needs positive mass and inertia", link.name));
            }
        }
        for (j, joint) in self.joints.iter().enumerate() {
            if joint.parent > j {
                return bad(format!("joint `{}` parent {} must precede its child link {}", joint.name, joint.parent, j + 1));
            }
            if !(joint.lower < joint.upper) {
                return bad(format!("joint `{}` needs lower < upper", joint.name));
            }
            if !(joint.torque_limit > 0.0) {
                return bad(format!("joint `{}` needs a positive torque limit", joint.name));
            }
            if !(joint.kp >= 0.0 && joint.kd >= 0.0) {
                return bad(format!("joint `{}` needs non-negative PD gains", joint.name));
            }
            if joint.axis.abs() != 1.0 || joint.mirror_sign.abs() != 1.0 {
                return bad(format!("joint `{}` axis and mirror_sign must be ±1", joint.name));
            }
            let Some(m) = self.joint_index(&joint.mirror) else {
                return bad(format!("joint `{}` mirrors unknown joint `{}`", joint.name, joint.mirror));
            };
            if self.joints[m].mirror != joint.name || self.joints[m].mirror_sign != joint.mirror_sign {
                return bad(format!("mirror pairing of `{}` and `{}` is not symmetric", joint.name, joint.mirror));
            }
        }
        for foot in &self.feet {
            if !self.links.iter().any(|l| &l.name == foot) {
                return bad(format!("unknown foot link `{foot}`"));
            }
        }
        let c = &self.contact;
        if !(c.stiffness >= 0.0 && c.damping >= 0.0 && c.friction >= 0.0 && c.slip_velocity > 0.0) {
            return bad("contact parameters must be non-negative with a positive slip velocity".into());
        }
        Ok(())
    }

    /// Copy with every PD gain multiplied by `scale`.
    pub fn with_gain_scale(&self, scale: f64) -> Self {
        let mut m = self.clone();
        for j in &mut m.joints {
            j.kp *= scale;
            j.kd *= scale;
        }
        m
    }

    /// Copy with every link mass and inertia multiplied by `scale`.
    pub fn with_mass_scale(&self, scale: f64) -> Self {
        let mut m = self.clone();
        for l in &mut m.links {
            l.mass *= scale;
            l.inertia *= scale;
        }
        m
    }

    /// Copy with the base pinned in place and every contact point removed,
    /// so the limbs swing freely in the air.
    pub fn fixed_base_variant(&self, gravity: f64) -> Self {
        let mut m = self.clone();
        m.fixed_base = true;
        m.gravity = gravity;
        for l in &mut m.links {
            l.contacts.clear();
        }
        m
    }
}
