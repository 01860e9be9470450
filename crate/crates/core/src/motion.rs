//! Reference motions, cyclic playback, goal construction and sagittal
//! mirroring.
//!
//! Motion files are plain text. The first line is a header
//! `njoints=<NJ> fps=50 cycle=<start>,<end>`; every following line holds one
//! frame as whitespace-separated floats: target base linear velocity (2),
//! angular velocity (1), joint positions (NJ), joint velocities (NJ).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::sim::RobotModel;

pub const MOTION_FPS: u32 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetFrame {
    /// Target base linear velocity `[vx, vz]`, m/s.
    pub v: [f64; 2],
    /// Target base angular velocity, rad/s.
    pub w: f64,
    /// Target joint positions, rad.
    pub q: Vec<f64>,
    /// Target joint velocities, rad/s.
    pub qd: Vec<f64>,
}

impl TargetFrame {
    pub fn standing(nj: usize) -> Self {
        Self {
            v: [0.0, 0.0],
            w: 0.0,
            q: vec![0.0; nj],
            qd: vec![0.0; nj],
        }
    }

    pub fn num_joints(&self) -> usize {
        self.q.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMotion {
    pub name: String,
    pub fps: u32,
    pub frames: Vec<TargetFrame>,
    pub cycle_start: usize,
    pub cycle_end: usize,
}

impl ReferenceMotion {
    pub fn new(name: impl Into<String>, frames: Vec<TargetFrame>, cycle_start: usize, cycle_end: usize) -> Result<Self> {
        let motion = Self {
            name: name.into(),
            fps: MOTION_FPS,
            frames,
            cycle_start,
            cycle_end,
        };
        motion.check_structure()?;
        Ok(motion)
    }

    fn check_structure(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::Config { field: "motion".into(), message: m });
        if self.frames.is_empty() {
            return invalid("motion has no frames".into());
        }
        if !(self.cycle_start < self.cycle_end && self.cycle_end <= self.frames.len()) {
            return invalid(format!(
                "cycle [{}, {}) must satisfy 0 <= start < end <= {}",
                self.cycle_start,
                self.cycle_end,
                self.frames.len()
            ));
        }
        let nj = self.frames[0].num_joints();
        for f in &self.frames {
            check_len("motion frame positions", nj, f.q.len())?;
            check_len("motion frame velocities", nj, f.qd.len())?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn num_joints(&self) -> usize {
        self.frames[0].num_joints()
    }

    pub fn cycle_len(&self) -> usize {
        self.cycle_end - self.cycle_start
    }

    /// Frame index played at `step`. Cyclic playback repeats
    /// `[cycle_start, cycle_end)` forever; otherwise the last frame is held.
    pub fn frame_index(&self, step: usize, cyclic: bool) -> usize {
        if cyclic {
            if step < self.cycle_end {
                step
            } else {
                self.cycle_start + (step - self.cycle_start) % self.cycle_len()
            }
        } else {
            step.min(self.frames.len() - 1)
        }
    }

    pub fn frame_at(&self, step: usize, cyclic: bool) -> &TargetFrame {
        &self.frames[self.frame_index(step, cyclic)]
    }

    /// Checks joint dimension and that every target lies within the model's
    /// joint limits.
    pub fn validate_against(&self, model: &RobotModel) -> Result<()> {
        check_len("motion joints", model.num_joints(), self.num_joints())?;
        for (i, frame) in self.frames.iter().enumerate() {
            for (joint, &q) in model.joints.iter().zip(&frame.q) {
                if q < joint.lower || q > joint.upper {
                    return Err(Error::JointLimit {
                        frame: i,
                        joint: joint.name.clone(),
                        value: q,
                        lower: joint.lower,
                        upper: joint.upper,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        });
        let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing header line".into()))?;
        let (mut nj, mut fps, mut cycle) = (None, None, None);
        for token in header.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| parse_err(hline + 1, format!("malformed header token `{token}`")))?;
            let bad = |_| parse_err(hline + 1, format!("bad value for `{key}`: `{value}`"));
            match key {
                "njoints" => nj = Some(value.parse::<usize>().map_err(bad)?),
                "fps" => fps = Some(value.parse::<u32>().map_err(bad)?),
                "cycle" => {
                    let (a, b) = value
                        .split_once(',')
                        .ok_or_else(|| parse_err(hline + 1, format!("cycle must be `start,end`, got `{value}`")))?;
                    let a = a.parse::<usize>().map_err(bad)?;
                    let b = b.parse::<usize>().map_err(bad)?;
                    cycle = Some((a, b));
                }
                other => return Err(parse_err(hline + 1, format!("unknown header key `{other}`"))),
            }
        }
        let nj = nj.ok_or_else(|| parse_err(hline + 1, "header lacks `njoints`".into()))?;
        let fps = fps.ok_or_else(|| parse_err(hline + 1, "header lacks `fps`".into()))?;
        let (cs, ce) = cycle.ok_or_else(|| parse_err(hline + 1, "header lacks `cycle`".into()))?;
        if fps != MOTION_FPS {
            return Err(parse_err(hline + 1, format!("fps must be {MOTION_FPS}, got {fps}")));
        }
        let width = 3 + 2 * nj;
        let mut frames = Vec::new();
        for (i, line) in lines {
            let row = i + 1;
            let values = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| parse_err(row, format!("not a number: `{t}`"))))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != width {
                return Err(parse_err(row, format!("expected {width} values, found {}", values.len())));
            }
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(parse_err(row, format!("non-finite value {v}")));
            }
            frames.push(TargetFrame {
                v: [values[0], values[1]],
                w: values[2],
                q: values[3..3 + nj].to_vec(),
                qd: values[3 + nj..].to_vec(),
            });
        }
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::new(name, frames, cs, ce).map_err(|e| parse_err(hline + 1, e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("njoints={} fps={} cycle={},{}\n", self.num_joints(), self.fps, self.cycle_start, self.cycle_end);
        for f in &self.frames {
            let vals = [f.v[0], f.v[1], f.w].into_iter().chain(f.q.iter().copied()).chain(f.qd.iter().copied());
            let mut first = true;
            for v in vals {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Reads a motion file and validates it against `model`.
pub fn load_motion(path: impl AsRef<Path>, model: &RobotModel) -> Result<ReferenceMotion> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let text = std::fs::read_to_string(&path)?;
    let motion = ReferenceMotion::parse(&text, &path)?;
    motion.validate_against(model)?;
    Ok(motion)
}

/// Goal vector `[q̄, q̄ − q]`.
pub fn make_goal(frame: &TargetFrame, q: &[f64]) -> Result<Vec<f64>> {
    check_len("make_goal", frame.q.len(), q.len())?;
    let mut goal = frame.q.clone();
    goal.extend(frame.q.iter().zip(q).map(|(t, c)| t - c));
    Ok(goal)
}

/// Parameters of the synthetic sinusoidal walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitParams {
    /// Hz
    pub stride_frequency: f64,
    pub hip_amplitude: f64,
    pub knee_amplitude: f64,
    /// Phase offset between the legs, rad.
    pub phase_offset: f64,
    pub stand_before: f64,
    /// Amplitude fade-in before the walk cycle and fade-out after it, s.
    pub ramp_duration: f64,
    /// Requested walk duration, s; rounded to a whole number of strides.
    pub walk_duration: f64,
    pub stand_after: f64,
    /// Nominal forward speed written into the frames, m/s.
    pub speed: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            stride_frequency: 1.4,
            hip_amplitude: 0.4,
            knee_amplitude: 0.6,
            phase_offset: PI,
            stand_before: 1.0,
            ramp_duration: 0.5,
            walk_duration: 2.0,
            stand_after: 1.0,
            speed: 0.5,
        }
    }
}

struct LegTargets {
    hip: (f64, f64),
    knee: (f64, f64),
    ankle: (f64, f64),
}

/// Hip swings sinusoidally; the knee flexes while the hip swings forward;
/// the ankle compensates hip plus knee so the sole stays level.
fn leg_targets(p: &GaitParams, phase: f64, omega: f64) -> LegTargets {
    let (s, c) = phase.sin_cos();
    let hip = (p.hip_amplitude * s, p.hip_amplitude * c * omega);
    let knee = if c > 0.0 {
        (-p.knee_amplitude * c * c, 2.0 * p.knee_amplitude * c * s * omega)
    } else {
        (0.0, 0.0)
    };
    let ankle = (-(hip.0 + knee.0), -(hip.1 + knee.1));
    LegTargets { hip, knee, ankle }
}

/// Synthetic stand–walk–stand reference for a model with `left_*`/`right_*`
/// hip, knee and ankle joints. Other joints stay at zero.
pub fn generate_walk(model: &RobotModel, params: &GaitParams) -> Result<ReferenceMotion> {
    let fps = MOTION_FPS as f64;
    let nj = model.num_joints();
    let idx = |name: &str| {
        model.joint_index(name).ok_or_else(|| Error::Config {
            field: "motion".into(),
            message: format!("gait generator needs a joint named `{name}`"),
        })
    };
    let left = [idx("left_hip")?, idx("left_knee")?, idx("left_ankle")?];
    let right = [idx("right_hip")?, idx("right_knee")?, idx("right_ankle")?];

    let stand_before = (params.stand_before * fps).round() as usize;
    let stand_after = (params.stand_after * fps).round() as usize;
    let (walk_frames, frequency) = if params.stride_frequency > 0.0 {
        let strides = (params.walk_duration * params.stride_frequency).round().max(1.0);
        let frames = (strides * fps / params.stride_frequency).round().max(1.0) as usize;
        (frames, strides * fps / frames as f64)
    } else {
        (((params.walk_duration * fps).round() as usize).max(1), 0.0)
    };
    let omega = 2.0 * PI * frequency;
    let ramp = if frequency > 0.0 {
        (params.ramp_duration.max(0.0) * fps).round() as usize
    } else {
        0
    };

    // Envelope `e` scales positions; `de` is its time derivative.
    let gait_frame = |t: f64, e: f64, de: f64| {
        let mut f = TargetFrame::standing(nj);
        if frequency == 0.0 {
            return f;
        }
        f.v = [params.speed * e, 0.0];
        for (joints, offset) in [(left, 0.0), (right, params.phase_offset)] {
            let leg = leg_targets(params, omega * t + offset, omega);
            for (j, (q, qd)) in joints.into_iter().zip([leg.hip, leg.knee, leg.ankle]) {
                f.q[j] = e * q;
                f.qd[j] = e * qd + de * q;
            }
        }
        f
    };
    let ramp_s = ramp as f64 / fps;
    let smooth = |x: f64| (x * x * (3.0 - 2.0 * x), 6.0 * x * (1.0 - x) / ramp_s);

    let mut frames = Vec::with_capacity(stand_before + 2 * ramp + walk_frames + stand_after);
    frames.extend((0..stand_before).map(|_| TargetFrame::standing(nj)));
    // Fade-in ends exactly where the cycle begins, at phase zero.
    frames.extend((0..ramp).map(|k| {
        let (e, de) = smooth(k as f64 / ramp as f64);
        gait_frame((k as f64 - ramp as f64) / fps, e, de)
    }));
    frames.extend((0..walk_frames).map(|k| gait_frame(k as f64 / fps, 1.0, 0.0)));
    let walk_s = walk_frames as f64 / fps;
    frames.extend((0..ramp).map(|k| {
        let (e, de) = smooth(1.0 - k as f64 / ramp as f64);
        gait_frame(walk_s + k as f64 / fps, e, -de)
    }));
    frames.extend((0..stand_after).map(|_| TargetFrame::standing(nj)));
    let cycle_start = stand_before + ramp;
    ReferenceMotion::new("synthetic_walk", frames, cycle_start, cycle_start + walk_frames)
}

/// Signed index permutations for sagittal mirroring of observations and
/// actions: `out[i] = sign[i] · in[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorSpec {
    pub state_perm: Vec<usize>,
    pub state_sign: Vec<f64>,
    pub action_perm: Vec<usize>,
    pub action_sign: Vec<f64>,
}

impl MirrorSpec {
    pub fn new(state_perm: Vec<usize>, state_sign: Vec<f64>, action_perm: Vec<usize>, action_sign: Vec<f64>) -> Result<Self> {
        let spec = Self {
            state_perm,
            state_sign,
            action_perm,
            action_sign,
        };
        check_involution("state mirror", &spec.state_perm, &spec.state_sign)?;
        check_involution("action mirror", &spec.action_perm, &spec.action_sign)?;
        Ok(spec)
    }

    pub fn mirror_observation(&self, obs: &[f64]) -> Result<Vec<f64>> {
        apply_signed_perm("mirror_observation", &self.state_perm, &self.state_sign, obs)
    }

    pub fn mirror_action(&self, action: &[f64]) -> Result<Vec<f64>> {
        apply_signed_perm("mirror_action", &self.action_perm, &self.action_sign, action)
    }
}

fn check_involution(what: &str, perm: &[usize], sign: &[f64]) -> Result<()> {
    let bad = |m: String| Err(Error::Config { field: what.to_string(), message: m });
    if perm.len() != sign.len() {
        return bad("permutation and sign lengths differ".into());
    }
    for (i, (&p, &s)) in perm.iter().zip(sign).enumerate() {
        if p >= perm.len() {
            return bad(format!("index {p} out of range"));
        }
        if s != 1.0 && s != -1.0 {
            return bad(format!("sign at {i} must be ±1, got {s}"));
        }
        if perm[p] != i || sign[p] != s {
            return bad(format!("entry {i} is not an involution"));
        }
    }
    Ok(())
}

fn apply_signed_perm(context: &'static str, perm: &[usize], sign: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_len(context, perm.len(), x.len())?;
    Ok(perm.iter().zip(sign).map(|(&p, &s)| s * x[p]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_motion(len: usize, cs: usize, ce: usize) -> ReferenceMotion {
        let frames = (0..len)
            .map(|i| {
                let mut f = TargetFrame::standing(2);
                f.q[0] = i as f64 * 1e-3;
                f
            })
            .collect();
        ReferenceMotion::new("toy", frames, cs, ce).unwrap()
    }

    #[test]
    fn frame_at_playback_rules() {
        let m = toy_motion(200, 50, 150);
        assert_eq!(m.frame_index(0, false), 0);
        assert_eq!(m.frame_index(0, true), 0);
        assert_eq!(m.frame_index(200, false), 199);
        assert_eq!(m.frame_index(10_000, false), 199);
        assert_eq!(m.frame_index(149, true), 149);
        assert_eq!(m.frame_index(150, true), 50);
        assert_eq!(m.frame_index(251, true), 51);
    }

    #[test]
    fn cyclic_playback_matches_modular_oracle() {
        let m = toy_motion(200, 50, 150);
        for step in 0..2000usize {
            // Independent oracle: walk forward one step at a time.
            let mut idx = 0usize;
            for _ in 0..step {
                idx += 1;
                if idx == 150 {
                    idx = 50;
                }
            }
            assert_eq!(m.frame_index(step, true), idx, "step {step}");
        }
    }

    #[test]
    fn goal_layout() {
        let mut f = TargetFrame::standing(6);
        f.q = vec![0.1; 6];
        assert_eq!(make_goal(&f, &f.q.clone()).unwrap()[6..], [0.0; 6]);
        let g = make_goal(&f, &[0.0; 6]).unwrap();
        assert_eq!(g, vec![0.1; 12]);
        assert!(make_goal(&f, &[0.0; 5]).is_err());
    }

    #[test]
    fn mirror_action_swaps_legs() {
        let spec = MirrorSpec::new(vec![0], vec![1.0], vec![3, 4, 5, 0, 1, 2], vec![1.0; 6]).unwrap();
        let a = spec.mirror_action(&[0.3, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(a, vec![0.0, 0.0, 0.0, 0.3, 0.0, 0.0]);
    }

    #[test]
    fn mirror_rejects_non_involution() {
        assert!(MirrorSpec::new(vec![1, 2, 0], vec![1.0; 3], vec![0], vec![1.0]).is_err());
        assert!(MirrorSpec::new(vec![1, 0], vec![1.0, -1.0], vec![0], vec![1.0]).is_err());
    }

    #[test]
    fn generated_walk_structure() {
        let model = RobotModel::planar_walker();
        let m = generate_walk(&model, &GaitParams::default()).unwrap();
        assert_eq!(m.fps, 50);
        assert_eq!(m.cycle_start, 75);
        // Three whole strides closest to 2 s at 1.4 Hz.
        assert_eq!(m.cycle_len(), 107);
        assert_eq!(m.len(), 50 + 25 + 107 + 25 + 50);
        m.validate_against(&model).unwrap();
        // Wrap-around continuity: extrapolating the last two cycle frames lands on the cycle start.
        let (prev, last) = (&m.frames[m.cycle_end - 2], &m.frames[m.cycle_end - 1]);
        let first = &m.frames[m.cycle_start];
        let p = GaitParams::default();
        let omega = 2.0 * PI * 3.0 * 50.0 / 107.0;
        // Second differences are bounded by max |q''| dt².
        let bound = (p.hip_amplitude + 2.0 * p.knee_amplitude) * omega * omega / 2500.0;
        for j in 0..6 {
            assert!((2.0 * last.q[j] - prev.q[j] - first.q[j]).abs() <= bound, "joint {j}");
        }
    }

    #[test]
    fn zero_frequency_is_standing() {
        let model = RobotModel::planar_walker();
        let params = GaitParams {
            stride_frequency: 0.0,
            ..GaitParams::default()
        };
        let m = generate_walk(&model, &params).unwrap();
        assert!(m.frames.iter().all(|f| f.q.iter().all(|&q| q == 0.0)));
        assert_eq!(m.cycle_len(), 100);
    }

    #[test]
    fn generator_velocities_match_finite_differences() {
        let p = GaitParams::default();
        let omega = 2.0 * PI * p.stride_frequency;
        let h = 1e-6;
        for i in 0..1000 {
            let t = i as f64 * 1e-3;
            let (lo, mid, hi) = (
                leg_targets(&p, omega * (t - h), omega),
                leg_targets(&p, omega * t, omega),
                leg_targets(&p, omega * (t + h), omega),
            );
            for (a, b, c) in [(lo.hip, mid.hip, hi.hip), (lo.knee, mid.knee, hi.knee), (lo.ankle, mid.ankle, hi.ankle)] {
                let fd = (c.0 - a.0) / (2.0 * h);
                assert!((fd - b.1).abs() < 1e-4, "t {t}: {fd} vs {}", b.1);
            }
        }
    }

    #[test]
    fn ramps_blend_smoothly_into_and_out_of_the_cycle() {
        let model = RobotModel::planar_walker();
        let m = generate_walk(&model, &GaitParams::default()).unwrap();
        let first = &m.frames[50];
        assert!(first.q.iter().chain(&first.qd).all(|&x| x == 0.0));
        // Frame velocities integrate (Simpson) to the frame positions
        // everywhere, ramps included.
        let dt = 1.0 / 50.0;
        for k in 1..m.len() - 1 {
            let (a, b, c) = (&m.frames[k - 1], &m.frames[k], &m.frames[k + 1]);
            for j in 0..6 {
                let integral = dt / 3.0 * (a.qd[j] + 4.0 * b.qd[j] + c.qd[j]);
                let delta = c.q[j] - a.q[j];
                assert!((delta - integral).abs() < 0.01, "frame {k} joint {j}: {delta} vs {integral}");
            }
        }
    }

    #[test]
    fn text_round_trip_and_errors() {
        let model = RobotModel::planar_walker();
        let m = generate_walk(&model, &GaitParams::default()).unwrap();
        let path = Path::new("walk.motion");
        let back = ReferenceMotion::parse(&m.to_text(), path).unwrap();
        assert_eq!(back.frames, m.frames);
        assert_eq!((back.cycle_start, back.cycle_end), (m.cycle_start, m.cycle_end));

        let mut lines: Vec<String> = m.to_text().lines().map(String::from).collect();
        let mut fields: Vec<&str> = lines[3].split_whitespace().collect();
        fields[4] = "NaN";
        lines[3] = fields.join(" ");
        let text = lines.join("\n");
        match ReferenceMotion::parse(&text, path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
