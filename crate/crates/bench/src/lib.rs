//! Benchmark fixtures.

use rand::SeedableRng;
use strider_core::motion::TargetFrame;
use strider_core::sim::{self, RobotModel, SimState};

/// Walker resting on the ground at its standing pose, plus the PD torques
/// that hold it there.
pub fn standing_walker() -> (RobotModel, SimState, Vec<f64>) {
    let model = RobotModel::planar_walker();
    let frame = TargetFrame::standing(model.num_joints());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let state = sim::reset(&model, &frame, 0.0, &mut rng).expect("standing reset");
    let torque = sim::pd_torque(&frame.q, &state.q, &state.qd, &model).expect("pd torque");
    (model, state, torque)
}
