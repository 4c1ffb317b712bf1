//! Pushing dynamics: a kinematic disc robot servoing toward a commanded
//! position, and a damped rigid block driven by penalty contact forces.

use super::{State, Task};
use crate::geometry::{wrap_angle, Pose, Vec2};

/// Net force and torque (about the block origin) exerted by the robot.
pub(super) fn contact_wrench(task: &Task, robot: Vec2, robot_vel: Vec2, block: &Pose, block_vel: Vec2, omega: f64) -> (Vec2, f64) {
    let cfg = &task.config;
    let p = &cfg.physics;
    let r = cfg.robot_radius;
    let offset = robot - Vec2::from(block.pos);
    if offset.norm() > task.bounding_radius + r {
        return (Vec2::ZERO, 0.0);
    }
    let local = offset.rotate(-block.yaw);
    let mut force = Vec2::ZERO;
    let mut torque = 0.0;
    for part in &task.parts {
        let Some(c) = part.circle_contact(local, r) else { continue };
        let n = c.normal.rotate(block.yaw);
        let arm = c.point.rotate(block.yaw);
        let point_vel = block_vel + arm.perp() * omega;
        let rel = robot_vel - point_vel;
        let closing = -rel.dot(n);
        let fn_mag = (p.contact_stiffness * c.depth + p.contact_damping * closing).max(0.0);
        let t = n.perp();
        let slip = rel.dot(t);
        let ft_mag = p.friction * fn_mag * (slip / p.friction_slip_speed).tanh();
        let f = -n * fn_mag + t * ft_mag;
        force += f;
        torque += arm.cross(f);
    }
    (force, torque)
}

pub(super) fn step_pushing(task: &Task, s: &State, control: [f64; 2]) -> State {
    let cfg = &task.config;
    let p = &cfg.physics;
    let dt = cfg.dt;
    let r = cfg.robot_radius;
    let ws = cfg.workspace;
    let clamp_ws = |v: Vec2| {
        Vec2::new(
            v.x.clamp(ws.min[0] + r, ws.max[0] - r),
            v.y.clamp(ws.min[1] + r, ws.max[1] - r),
        )
    };
    let target = clamp_ws(Vec2::from(control));
    let mut robot = Vec2::from(s.robot_pos);
    let mut robot_vel = (target - robot) * (1.0 / dt);
    let speed = robot_vel.norm();
    if speed > p.max_robot_speed {
        robot_vel = robot_vel * (p.max_robot_speed / speed);
    }
    let h = dt / p.substeps as f64;
    let mut pose = s.block_pose();
    let mut vel = Vec2::from(s.block_vel);
    let mut omega = s.block_yaw_rate;
    let lin_decay = 1.0 / (1.0 + p.linear_damping * h);
    let ang_decay = 1.0 / (1.0 + p.angular_damping * h);
    for _ in 0..p.substeps {
        robot = clamp_ws(robot + robot_vel * h);
        let (f, tau) = contact_wrench(task, robot, robot_vel, &pose, vel, omega);
        vel = (vel + f * (h / p.block_mass)) * lin_decay;
        omega = (omega + tau * (h / task.inertia)) * ang_decay;
        pose.pos = (Vec2::from(pose.pos) + vel * h).into();
        pose.yaw += omega * h;
    }
    State {
        robot_pos: robot.into(),
        block_pos: pose.pos,
        block_yaw: wrap_angle(pose.yaw),
        robot_vel: robot_vel.into(),
        block_vel: vel.into(),
        block_yaw_rate: omega,
        step_index: s.step_index + 1,
    }
}
