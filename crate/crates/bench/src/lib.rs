//! Shared fixtures for the benchmarks.

use gpc_core::episode::History;
use gpc_core::flowmodel::{FlowModel, Mlp, NormStats};
use gpc_core::spc::Interpolation;
use gpc_core::tasks::{State, Task, TaskConfig};

pub fn push_t() -> Task {
    Task::new(TaskConfig::push_t()).expect("built-in task")
}

/// Start state with the robot touching the block's bar.
pub fn contact_state(task: &Task) -> (State, History) {
    let g = task.config().goal_pose;
    let x = State::at_rest([g.pos[0] - 40.0, g.pos[1] + 20.0], [g.pos[0] - 60.0, g.pos[1] - 60.0], 0.3);
    (x, History::new(x))
}

/// Untrained model of the default width.
pub fn random_model(seed: u64) -> FlowModel {
    let mlp = Mlp::init(vec![28, 256, 256, 256, 8], &mut gpc_core::seed::rng(seed)).expect("layer sizes");
    let input = NormStats { mean: [256.0, 256.0, 256.0, 256.0, 0.0, 0.0].repeat(2), std: [100.0, 100.0, 80.0, 80.0, 0.7, 0.7].repeat(2) };
    let output = NormStats { mean: vec![256.0; 8], std: vec![60.0; 8] };
    FlowModel::new(mlp, input, output, (4, 2), 8, Interpolation::CubicSpline, 3.0).expect("consistent shapes")
}
