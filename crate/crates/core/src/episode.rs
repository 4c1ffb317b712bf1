//! Receding-horizon execution shared by every controller.

use crate::error::Result;
use crate::gpc::StepReport;
use crate::seed;
use crate::spc::ControlKnots;
use crate::tasks::{State, Task};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// State history of length one: the state at the previous replan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub prev_replanning_state: State,
}

impl History {
    /// History at the start of an episode: the initial state itself.
    pub fn new(initial: State) -> Self {
        Self { prev_replanning_state: initial }
    }

    pub fn roll(&self, x: State) -> Self {
        Self { prev_replanning_state: x }
    }
}

/// Output of one planning call.
#[derive(Clone, Debug)]
pub struct Plan {
    /// Knots executed until the next replan.
    pub execute: ControlKnots,
    pub best_cost: f64,
    pub report: Option<StepReport>,
}

pub trait Controller {
    fn plan(&mut self, task: &Task, state: &State, history: &History, rng_seed: u64) -> Result<Plan>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplanRecord {
    pub state: State,
    pub history: State,
    pub plan: ControlKnots,
    pub best_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<StepReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeTrace {
    /// Executed states, starting with the initial state.
    pub states: Vec<State>,
    pub controls: Vec<[f64; 2]>,
    pub replans: Vec<ReplanRecord>,
    pub success: bool,
    pub success_step: Option<usize>,
    /// Wall-clock planning time; machine dependent, never persisted.
    #[serde(skip)]
    pub planning_seconds: f64,
}

/// Equality ignores the wall-clock field.
impl PartialEq for EpisodeTrace {
    fn eq(&self, o: &Self) -> bool {
        self.states == o.states
            && self.controls == o.controls
            && self.replans == o.replans
            && self.success == o.success
            && self.success_step == o.success_step
    }
}

impl EpisodeTrace {
    /// Mean elite CEM fraction over the replans that report one.
    pub fn mean_elite_cem_fraction(&self) -> Option<f64> {
        let fr: Vec<f64> = self.replans.iter().filter_map(|r| r.report.as_ref()).map(|r| r.elite_cem_fraction).collect();
        (!fr.is_empty()).then(|| fr.iter().sum::<f64>() / fr.len() as f64)
    }

    pub fn wall_time_per_replan(&self) -> f64 {
        if self.replans.is_empty() {
            0.0
        } else {
            self.planning_seconds / self.replans.len() as f64
        }
    }
}

/// Runs `controller` from `x0` until success or the task's step budget.
///
/// Each iteration plans (and records the plan), stops if the current state
/// already succeeds, and otherwise executes `replan_interval` steps of the
/// plan. Replan `i` receives the seed `derive(seed, i)`.
pub fn run_episode(
    task: &Task,
    controller: &mut dyn Controller,
    x0: &State,
    replan_interval: usize,
    seed: u64,
) -> Result<EpisodeTrace> {
    let mut x = *x0;
    let mut history = History::new(*x0);
    let mut trace = EpisodeTrace {
        states: vec![x],
        controls: Vec::new(),
        replans: Vec::new(),
        success: false,
        success_step: None,
        planning_seconds: 0.0,
    };
    'episode: loop {
        let started = Instant::now();
        let plan = controller.plan(task, &x, &history, seed::derive(seed, trace.replans.len() as u64))?;
        trace.planning_seconds += started.elapsed().as_secs_f64();
        trace.replans.push(ReplanRecord {
            state: x,
            history: history.prev_replanning_state,
            plan: plan.execute.clone(),
            best_cost: plan.best_cost,
            report: plan.report,
        });
        history = history.roll(x);
        if task.is_success(&x) {
            trace.success = true;
            trace.success_step = Some(x.step_index);
            break;
        }
        if x.step_index >= task.max_steps() {
            break;
        }
        let controls = plan.execute.interpolate_planar(task.dt())?;
        for &u in controls.iter().take(replan_interval.max(1)) {
            x = task.step(&x, u)?;
            trace.states.push(x);
            trace.controls.push(u);
            if task.is_success(&x) {
                trace.success = true;
                trace.success_step = Some(x.step_index);
                break 'episode;
            }
            if x.step_index >= task.max_steps() {
                break 'episode;
            }
        }
    }
    Ok(trace)
}
