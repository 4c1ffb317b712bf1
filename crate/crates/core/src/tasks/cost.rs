use super::{State, Task};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec2};
use std::collections::BTreeMap;

/// Recognized keys of `cost_weights`.
pub const COST_TERMS: [&str; 5] = ["proximity", "velocity", "goal_position", "goal_yaw", "progress"];

/// Nonnegative weights of the cost terms; absent keys weigh zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostWeights {
    pub proximity: f64,
    pub velocity: f64,
    pub goal_position: f64,
    pub goal_yaw: f64,
    pub progress: f64,
}

impl CostWeights {
    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self> {
        let mut w = CostWeights::default();
        for (k, &v) in map {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("cost weight `{k}` = {v} must be finite and nonnegative")));
            }
            let slot = match k.as_str() {
                "proximity" => &mut w.proximity,
                "velocity" => &mut w.velocity,
                "goal_position" => &mut w.goal_position,
                "goal_yaw" => &mut w.goal_yaw,
                "progress" => &mut w.progress,
                other => return Err(Error::InvalidConfig(format!("unknown cost term `{other}`"))),
            };
            *slot = v;
        }
        Ok(w)
    }
}

impl Task {
    /// Distance from the tracked object to the goal position.
    pub fn goal_distance(&self, s: &State) -> f64 {
        let pose = self.object_pose(s);
        (Vec2::from(pose.pos) - Vec2::from(self.config.goal_pose.pos)).norm()
    }

    /// Goal-reaching term; doubles as the terminal cost.
    ///
    /// Pushing: weighted block-to-goal distance, absolute wrapped yaw error
    /// and `max(0, d - progress_ref)`. Point mass: weighted squared distance.
    pub fn goal_cost(&self, s: &State, progress_ref: Option<f64>) -> f64 {
        let w = &self.weights;
        let d = self.goal_distance(s);
        if !self.config.kind.is_pushing() {
            return w.goal_position * d * d;
        }
        let yaw_err = wrap_angle(s.block_yaw - self.config.goal_pose.yaw).abs();
        let progress = progress_ref.map_or(0.0, |r| (d - r).max(0.0));
        w.goal_position * d + w.goal_yaw * yaw_err + w.progress * progress
    }

    pub fn stage_cost(&self, s: &State, _control: [f64; 2], progress_ref: Option<f64>) -> f64 {
        let w = &self.weights;
        let mut c = w.velocity * Vec2::from(s.robot_vel).norm() + self.goal_cost(s, progress_ref);
        if self.config.kind.is_pushing() {
            c += w.proximity * (Vec2::from(s.robot_pos) - Vec2::from(s.block_pos)).norm();
        }
        c
    }

    pub fn terminal_cost(&self, s: &State, progress_ref: Option<f64>) -> f64 {
        self.goal_cost(s, progress_ref)
    }
}
