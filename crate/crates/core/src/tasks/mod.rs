//! Deterministic planar task environments: point-mass reach, Push-T and Push-K.
//!
//! A [`TaskConfig`] is plain data (serializable into the `[task]` section of a
//! config file). [`Task::new`] validates it and precomputes the geometry the
//! simulator, the cost and the coverage metric need. All [`Task`] methods are
//! pure, so one task may be shared by many concurrent rollouts.

mod cost;
mod physics;

use crate::error::{Error, Result};
use crate::geometry::{rectangle, wrap_angle, ConvexPolygon, Pose, Vec2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub use cost::{CostWeights, COST_TERMS};

/// Coverage needed for success.
pub const SUCCESS_COVERAGE: f64 = 0.9;
/// Cells per side of the coverage raster.
pub const COVERAGE_GRID: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    PointMass,
    PushT,
    PushK,
}

impl TaskKind {
    pub fn is_pushing(self) -> bool {
        !matches!(self, TaskKind::PointMass)
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "point_mass" => Ok(TaskKind::PointMass),
            "push_t" => Ok(TaskKind::PushT),
            "push_k" => Ok(TaskKind::PushK),
            other => Err(Error::InvalidConfig(format!("unknown task kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

/// Contact and actuation constants of the pushing simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsParams {
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction: f64,
    /// Slip speed below which Coulomb friction is smoothed.
    pub friction_slip_speed: f64,
    pub linear_damping: f64,
    pub angular_damping: f64,
    pub block_mass: f64,
    pub max_robot_speed: f64,
    pub substeps: usize,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            contact_stiffness: 1.0e4,
            contact_damping: 1.0e2,
            friction: 0.5,
            friction_slip_speed: 1.0,
            linear_damping: 8.0,
            angular_damping: 8.0,
            block_mass: 1.0,
            max_robot_speed: 300.0,
            substeps: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub dt: f64,
    pub workspace: Workspace,
    pub robot_radius: f64,
    /// Convex parts of the block footprint, body frame, origin at the center of mass.
    pub block_polygon: Vec<Vec<[f64; 2]>>,
    pub goal_pose: Pose,
    pub max_steps: usize,
    pub cost_weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub physics: PhysicsParams,
}

fn weights(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

fn pushing_weights() -> BTreeMap<String, f64> {
    weights(&[
        ("proximity", 0.2),
        ("velocity", 0.002),
        ("goal_position", 1.0),
        ("goal_yaw", 60.0),
        ("progress", 2.0),
    ])
}

/// Shifts the parts so the union's centroid sits at the origin.
fn centered(parts: Vec<Vec<[f64; 2]>>) -> Vec<Vec<[f64; 2]>> {
    let polys: Vec<ConvexPolygon> = parts
        .iter()
        .map(|p| ConvexPolygon::new(p.iter().copied().map(Vec2::from).collect()).expect("convex part"))
        .collect();
    let area: f64 = polys.iter().map(|p| p.area()).sum();
    let c = polys.iter().fold(Vec2::ZERO, |acc, p| acc + p.centroid() * p.area()) * (1.0 / area);
    parts
        .into_iter()
        .map(|p| p.into_iter().map(|v| [v[0] - c.x, v[1] - c.y]).collect())
        .collect()
}

impl TaskConfig {
    /// T-block: a 120x30 bar atop a 30x90 stem.
    pub fn push_t() -> Self {
        Self {
            kind: TaskKind::PushT,
            dt: 0.01,
            workspace: Workspace { min: [0.0, 0.0], max: [512.0, 512.0] },
            robot_radius: 15.0,
            block_polygon: centered(vec![
                rectangle(-60.0, 0.0, 60.0, 30.0),
                rectangle(-15.0, -90.0, 15.0, 0.0),
            ]),
            goal_pose: Pose::new(256.0, 256.0, PI / 4.0),
            max_steps: 2500,
            cost_weights: pushing_weights(),
            physics: PhysicsParams::default(),
        }
    }

    /// K-block: a vertical spine and two diagonal arms.
    pub fn push_k() -> Self {
        Self {
            kind: TaskKind::PushK,
            block_polygon: centered(vec![
                rectangle(-40.0, -60.0, -10.0, 60.0),
                vec![[-10.0, 0.0], [60.0, 60.0], [30.0, 60.0], [-10.0, 25.0]],
                vec![[-10.0, -25.0], [30.0, -60.0], [60.0, -60.0], [-10.0, 0.0]],
            ]),
            ..Self::push_t()
        }
    }

    /// Velocity-controlled point robot reaching a goal position; the footprint
    /// (a 20x20 square) only serves the coverage-based success test.
    pub fn point_mass() -> Self {
        Self {
            kind: TaskKind::PointMass,
            dt: 0.01,
            workspace: Workspace { min: [0.0, 0.0], max: [512.0, 512.0] },
            robot_radius: 10.0,
            block_polygon: vec![rectangle(-10.0, -10.0, 10.0, 10.0)],
            goal_pose: Pose::new(256.0, 256.0, 0.0),
            max_steps: 1000,
            cost_weights: weights(&[("goal_position", 1.0e-3), ("velocity", 0.0)]),
            physics: PhysicsParams::default(),
        }
    }

    pub fn for_kind(kind: TaskKind) -> Self {
        match kind {
            TaskKind::PointMass => Self::point_mass(),
            TaskKind::PushT => Self::push_t(),
            TaskKind::PushK => Self::push_k(),
        }
    }
}

/// Full simulator state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub robot_pos: [f64; 2],
    pub block_pos: [f64; 2],
    pub block_yaw: f64,
    pub robot_vel: [f64; 2],
    pub block_vel: [f64; 2],
    pub block_yaw_rate: f64,
    pub step_index: usize,
}

impl State {
    /// A state at rest.
    pub fn at_rest(robot_pos: [f64; 2], block_pos: [f64; 2], block_yaw: f64) -> Self {
        Self {
            robot_pos,
            block_pos,
            block_yaw: wrap_angle(block_yaw),
            robot_vel: [0.0; 2],
            block_vel: [0.0; 2],
            block_yaw_rate: 0.0,
            step_index: 0,
        }
    }

    pub fn block_pose(&self) -> Pose {
        Pose { pos: self.block_pos, yaw: self.block_yaw }
    }

    pub fn is_finite(&self) -> bool {
        self.robot_pos
            .iter()
            .chain(&self.block_pos)
            .chain(&self.robot_vel)
            .chain(&self.block_vel)
            .chain([&self.block_yaw, &self.block_yaw_rate])
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    pub total_cost: f64,
    pub states: Vec<State>,
    /// First state index at which the success predicate held.
    pub success_step: Option<usize>,
}

/// A validated task with precomputed geometry.
#[derive(Clone, Debug)]
pub struct Task {
    config: TaskConfig,
    parts: Vec<ConvexPolygon>,
    bounding_radius: f64,
    inertia: f64,
    weights: CostWeights,
    goal_cells: Vec<Vec2>,
}

impl Task {
    pub fn new(config: TaskConfig) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(config.dt > 0.0 && config.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if config.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        let ws = &config.workspace;
        if !(ws.min[0] < ws.max[0] && ws.min[1] < ws.max[1]) {
            return bad("workspace bounds are empty");
        }
        if !(config.robot_radius > 0.0) {
            return bad("robot_radius must be positive");
        }
        let p = &config.physics;
        if !(p.block_mass > 0.0 && p.max_robot_speed > 0.0 && p.substeps >= 1 && p.friction_slip_speed > 0.0) {
            return bad("physics parameters must be positive");
        }
        if [p.contact_stiffness, p.contact_damping, p.friction, p.linear_damping, p.angular_damping]
            .iter()
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return bad("physics coefficients must be finite and nonnegative");
        }
        if config.block_polygon.is_empty() {
            return bad("block polygon has no parts");
        }
        let mut parts = Vec::with_capacity(config.block_polygon.len());
        for (i, part) in config.block_polygon.iter().enumerate() {
            let poly = ConvexPolygon::new(part.iter().copied().map(Vec2::from).collect()).ok_or_else(|| {
                Error::InvalidConfig(format!("block part {i} is not convex with at least 3 vertices"))
            })?;
            parts.push(poly);
        }
        let weights = CostWeights::from_map(&config.cost_weights)?;
        let area: f64 = parts.iter().map(|p| p.area()).sum();
        let polar: f64 = parts.iter().map(|p| p.polar_moment()).sum();
        let inertia = config.physics.block_mass * polar / area;
        let bounding_radius = parts.iter().map(|p| p.bounding_radius()).fold(0.0, f64::max);
        let mut task = Self { config, parts, bounding_radius, inertia, weights, goal_cells: Vec::new() };
        task.goal_cells = task.rasterize_goal();
        if task.goal_cells.is_empty() {
            return bad("goal footprint covers no coverage cell");
        }
        Ok(task)
    }

    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    pub fn kind(&self) -> TaskKind {
        self.config.kind
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn max_steps(&self) -> usize {
        self.config.max_steps
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    pub fn parts(&self) -> &[ConvexPolygon] {
        &self.parts
    }

    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    /// Box the commanded target positions are limited to (pushing tasks);
    /// `None` for velocity-controlled point-mass reach.
    pub fn control_bounds(&self) -> Option<([f64; 2], [f64; 2])> {
        if !self.config.kind.is_pushing() {
            return None;
        }
        let (ws, r) = (self.config.workspace, self.config.robot_radius);
        Some(([ws.min[0] + r, ws.min[1] + r], [ws.max[0] - r, ws.max[1] - r]))
    }

    /// Clamps each knot row of a planar plan into [`Task::control_bounds`].
    pub fn clamp_knots(&self, values: &mut [f64]) {
        if let Some((lo, hi)) = self.control_bounds() {
            for row in values.chunks_mut(2) {
                for j in 0..row.len() {
                    row[j] = row[j].clamp(lo[j], hi[j]);
                }
            }
        }
    }

    /// Pose whose footprint is compared against the goal: the block for
    /// pushing tasks, the robot itself for point-mass reach.
    pub fn object_pose(&self, s: &State) -> Pose {
        if self.config.kind.is_pushing() {
            s.block_pose()
        } else {
            Pose { pos: s.robot_pos, yaw: 0.0 }
        }
    }

    pub fn footprint_contains(&self, pose: &Pose, world: Vec2) -> bool {
        let local = pose.inverse_apply(world);
        self.parts.iter().any(|p| p.contains(local))
    }

    fn rasterize_goal(&self) -> Vec<Vec2> {
        let goal = self.config.goal_pose;
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in self.parts.iter().flat_map(|p| p.vertices()) {
            let w = goal.apply(*v);
            lo = Vec2::new(lo.x.min(w.x), lo.y.min(w.y));
            hi = Vec2::new(hi.x.max(w.x), hi.y.max(w.y));
        }
        let n = COVERAGE_GRID;
        let (cw, ch) = ((hi.x - lo.x) / n as f64, (hi.y - lo.y) / n as f64);
        let mut cells = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let c = Vec2::new(lo.x + (i as f64 + 0.5) * cw, lo.y + (j as f64 + 0.5) * ch);
                if self.footprint_contains(&goal, c) {
                    cells.push(c);
                }
            }
        }
        cells
    }

    /// Fraction of the goal footprint overlapped by the block footprint at `pose`.
    pub fn coverage(&self, pose: &Pose) -> f64 {
        let d = Vec2::from(pose.pos) - Vec2::from(self.config.goal_pose.pos);
        if d.norm() > 2.0 * self.bounding_radius {
            return 0.0;
        }
        let hit = self.goal_cells.iter().filter(|&&c| self.footprint_contains(pose, c)).count();
        hit as f64 / self.goal_cells.len() as f64
    }

    pub fn is_success(&self, s: &State) -> bool {
        s.step_index <= self.config.max_steps && self.coverage(&self.object_pose(s)) >= SUCCESS_COVERAGE
    }

    /// Advances the simulation by one `dt`.
    pub fn step(&self, s: &State, control: [f64; 2]) -> Result<State> {
        if !(control[0].is_finite() && control[1].is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite control {control:?}")));
        }
        if !s.is_finite() {
            return Err(Error::InvalidInput("non-finite state".into()));
        }
        Ok(self.step_unchecked(s, control))
    }

    pub(crate) fn step_unchecked(&self, s: &State, control: [f64; 2]) -> State {
        match self.config.kind {
            TaskKind::PointMass => {
                let dt = self.config.dt;
                State {
                    robot_pos: [s.robot_pos[0] + control[0] * dt, s.robot_pos[1] + control[1] * dt],
                    robot_vel: control,
                    step_index: s.step_index + 1,
                    ..*s
                }
            }
            TaskKind::PushT | TaskKind::PushK => physics::step_pushing(self, s, control),
        }
    }

    fn rollout_impl(
        &self,
        x0: &State,
        controls: &[[f64; 2]],
        progress_ref: Option<f64>,
        mut visit: impl FnMut(&State),
    ) -> Result<f64> {
        if !x0.is_finite() {
            return Err(Error::InvalidInput("non-finite initial state".into()));
        }
        let mut total = 0.0;
        let mut x = *x0;
        visit(&x);
        for &u in controls {
            if !(u[0].is_finite() && u[1].is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite control {u:?}")));
            }
            total += self.stage_cost(&x, u, progress_ref);
            x = self.step_unchecked(&x, u);
            visit(&x);
        }
        total += self.terminal_cost(&x, progress_ref);
        Ok(total)
    }

    /// Rollout cost only; the hot path of every planner.
    pub fn rollout_cost(&self, x0: &State, controls: &[[f64; 2]], progress_ref: Option<f64>) -> Result<f64> {
        self.rollout_impl(x0, controls, progress_ref, |_| {})
    }

    /// Rollout with the visited states and first success index.
    pub fn rollout(&self, x0: &State, controls: &[[f64; 2]], progress_ref: Option<f64>) -> Result<RolloutResult> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        let total_cost = self.rollout_impl(x0, controls, progress_ref, |s| states.push(*s))?;
        let success_step = states.iter().position(|s| self.is_success(s));
        Ok(RolloutResult { total_cost, states, success_step })
    }

    /// Random initial state for episode `seed`: the block uniform over the
    /// central 60% of the workspace with uniform yaw, the robot uniform over
    /// the workspace outside the block footprint.
    pub fn sample_initial_state(&self, seed: u64) -> State {
        let mut rng = crate::seed::rng(seed);
        let ws = self.config.workspace;
        let span = [ws.max[0] - ws.min[0], ws.max[1] - ws.min[1]];
        let central = |rng: &mut rand_chacha::ChaCha8Rng, axis: usize| {
            ws.min[axis] + span[axis] * rng.gen_range(0.2..0.8)
        };
        if !self.config.kind.is_pushing() {
            let robot = [central(&mut rng, 0), central(&mut rng, 1)];
            return State::at_rest(robot, self.config.goal_pose.pos, 0.0);
        }
        let block = [central(&mut rng, 0), central(&mut rng, 1)];
        let yaw = rng.gen_range(-PI..PI);
        let pose = Pose { pos: block, yaw };
        let r = self.config.robot_radius;
        let mut robot = [ws.min[0] + r, ws.min[1] + r];
        for _ in 0..10_000 {
            let cand = [
                rng.gen_range(ws.min[0] + r..ws.max[0] - r),
                rng.gen_range(ws.min[1] + r..ws.max[1] - r),
            ];
            let local = pose.inverse_apply(Vec2::from(cand));
            if self.parts.iter().all(|p| p.circle_contact(local, r).is_none() && !p.contains(local)) {
                robot = cand;
                break;
            }
        }
        State::at_rest(robot, block, yaw)
    }
}

