//! Flow-proposal predictive control: proposals from a trained flow model,
//! scored by rollouts (shooting) or mixed into the CEM sample set.

use crate::episode::{run_episode, Controller, EpisodeTrace, History, Plan};
use crate::error::{Error, Result};
use crate::flowmodel::{self, FlowModel};
use crate::seed;
use crate::spc::{
    argmin, elite_statistics, evaluate_candidates, finish_cem_update, sample_bounded, select_elites, ControlKnots,
    SamplingDistribution, SpcConfig,
};
use crate::tasks::{State, Task};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Cem,
    Flow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub executed_control: Vec<f64>,
    pub best_cost: f64,
    pub elite_cem_fraction: f64,
    pub candidate_provenance: Vec<Provenance>,
}

impl StepReport {
    /// `(cem, flow)` candidate counts.
    pub fn provenance_counts(&self) -> (usize, usize) {
        let cem = self.candidate_provenance.iter().filter(|p| **p == Provenance::Cem).count();
        (cem, self.candidate_provenance.len() - cem)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpcMode {
    Shoot,
    Cem,
}

impl std::str::FromStr for GpcMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shoot" => Ok(GpcMode::Shoot),
            "cem" => Ok(GpcMode::Cem),
            other => Err(Error::InvalidConfig(format!("unknown gpc mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpcConfig {
    pub spc: SpcConfig,
    /// Fraction of the N candidates drawn from the Gaussian distribution.
    pub cem_sample_ratio: f64,
    pub n_denoise: usize,
}

impl Default for GpcConfig {
    fn default() -> Self {
        Self { spc: SpcConfig::default(), cem_sample_ratio: 0.5, n_denoise: 2 }
    }
}

impl GpcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cem_sample_ratio) {
            return Err(Error::InvalidConfig(format!("cem_sample_ratio {} outside [0, 1]", self.cem_sample_ratio)));
        }
        if self.n_denoise == 0 {
            return Err(Error::InvalidConfig("n_denoise must be >= 1".into()));
        }
        if self.spc.n_rollouts == 0 || self.spc.n_elite == 0 {
            return Err(Error::InvalidConfig("n_rollouts and n_elite must be >= 1".into()));
        }
        let mut spc = self.spc.clone();
        spc.n_elite = spc.n_elite.min(spc.n_rollouts);
        spc.validate()
    }

    /// `(N_cem, N_flow)`.
    pub fn split(&self) -> (usize, usize) {
        let n = self.spc.n_rollouts;
        let n_cem = ((self.cem_sample_ratio * n as f64).round() as usize).min(n);
        (n_cem, n - n_cem)
    }
}

/// Flow proposals re-expressed on the controller's horizon and clamped to
/// the task's control bounds.
pub fn flow_proposals(
    model: &FlowModel,
    task: &Task,
    x: &State,
    h: &History,
    n_denoise: usize,
    n: usize,
    horizon_seconds: f64,
    rng_seed: u64,
) -> Result<Vec<ControlKnots>> {
    flowmodel::sample(model, x, h, n_denoise, n, rng_seed)?
        .into_iter()
        .map(|k| {
            let mut k = k.retimed(horizon_seconds)?;
            task.clamp_knots(k.values_mut());
            Ok(k)
        })
        .collect()
}

/// Result of one GPC step.
#[derive(Clone, Debug)]
pub struct GpcStep {
    /// First control of the executed plan.
    pub control: Vec<f64>,
    pub best: ControlKnots,
    pub dist: Option<SamplingDistribution>,
    pub history: History,
    pub report: StepReport,
}

/// Samples `n` flow proposals, rolls each out and keeps the cheapest.
pub fn gpc_shoot_step(
    model: &FlowModel,
    task: &Task,
    x: &State,
    h: &History,
    n: usize,
    n_denoise: usize,
    horizon_seconds: f64,
    rng_seed: u64,
) -> Result<GpcStep> {
    if n == 0 {
        return Err(Error::InvalidConfig("gpc-shoot needs at least one proposal".into()));
    }
    let candidates = flow_proposals(model, task, x, h, n_denoise, n, horizon_seconds, seed::derive(rng_seed, seed::STREAM_FLOW))?;
    let progress_ref = Some(task.goal_distance(&h.prev_replanning_state));
    let costs = evaluate_candidates(task, x, &candidates, progress_ref);
    let best = argmin(&costs)?;
    let control = candidates[best].get_action(0.0)?;
    Ok(GpcStep {
        report: StepReport {
            executed_control: control.clone(),
            best_cost: costs[best],
            elite_cem_fraction: 0.0,
            candidate_provenance: vec![Provenance::Flow; n],
        },
        control,
        best: candidates.into_iter().nth(best).unwrap(),
        dist: None,
        history: h.roll(*x),
    })
}

/// One GPC-CEM iteration.
///
/// `N_cem` Gaussian draws (annealed, clamped) come first, then `N_flow`
/// flow proposals. The elite set refits the variances, the best candidate
/// becomes the executed plan and, shifted by one replan interval, the next
/// mean. `progress` holds the goal distances used by the variance reset.
pub fn gpc_cem_step(
    model: Option<&FlowModel>,
    task: &Task,
    dist: &SamplingDistribution,
    x: &State,
    h: &History,
    cfg: &GpcConfig,
    progress: &mut Vec<f64>,
    rng_seed: u64,
) -> Result<GpcStep> {
    let spc = &cfg.spc;
    let (n_cem, n_flow) = cfg.split();
    let mut candidates = sample_bounded(task, dist, n_cem, spc.annealing_alpha, rng_seed);
    if n_flow > 0 {
        let model = model.ok_or_else(|| Error::InvalidConfig("gpc-cem with N_flow > 0 needs a model".into()))?;
        let stream = seed::derive(rng_seed, seed::STREAM_FLOW);
        candidates.extend(flow_proposals(model, task, x, h, cfg.n_denoise, n_flow, spc.horizon_seconds, stream)?);
    }
    let provenance: Vec<Provenance> =
        (0..candidates.len()).map(|i| if i < n_cem { Provenance::Cem } else { Provenance::Flow }).collect();
    let progress_ref = Some(task.goal_distance(&h.prev_replanning_state));
    let costs = evaluate_candidates(task, x, &candidates, progress_ref);
    let elites = select_elites(&costs, spc.n_elite.min(candidates.len()))?;
    let best = elites[0];
    let (_, variances) = elite_statistics(&candidates, &elites);
    let next = SamplingDistribution { mean: candidates[best].clone(), variances, initial_variance: dist.initial_variance };
    let next = finish_cem_update(spc, task, x, progress, next, &candidates[best]);
    let control = candidates[best].get_action(0.0)?;
    let cem_elites = elites.iter().filter(|&&i| provenance[i] == Provenance::Cem).count();
    Ok(GpcStep {
        report: StepReport {
            executed_control: control.clone(),
            best_cost: costs[best],
            elite_cem_fraction: cem_elites as f64 / elites.len() as f64,
            candidate_provenance: provenance,
        },
        control,
        best: candidates.swap_remove(best),
        dist: Some(next),
        history: h.roll(*x),
    })
}

pub fn roll_history(h: &History, x: State) -> History {
    h.roll(x)
}

/// Receding-horizon GPC controller holding its CEM state between replans.
pub struct GpcController<'m> {
    model: Option<&'m FlowModel>,
    config: GpcConfig,
    mode: GpcMode,
    dist: Option<SamplingDistribution>,
    progress: Vec<f64>,
}

impl<'m> GpcController<'m> {
    pub fn new(model: Option<&'m FlowModel>, config: GpcConfig, mode: GpcMode) -> Result<Self> {
        config.validate()?;
        let needs_model = mode == GpcMode::Shoot || config.split().1 > 0;
        if needs_model && model.is_none() {
            return Err(Error::InvalidConfig("a trained model is required for this gpc configuration".into()));
        }
        Ok(Self { model, config, mode, dist: None, progress: Vec::new() })
    }
}

impl Controller for GpcController<'_> {
    fn plan(&mut self, task: &Task, state: &State, history: &History, rng_seed: u64) -> Result<Plan> {
        let step = match self.mode {
            GpcMode::Shoot => {
                let model = self.model.expect("checked in new");
                let c = &self.config;
                gpc_shoot_step(model, task, state, history, c.spc.n_rollouts, c.n_denoise, c.spc.horizon_seconds, rng_seed)?
            }
            GpcMode::Cem => {
                let dist = match self.dist.take() {
                    Some(d) => d,
                    None => self.config.spc.initial_distribution(task, state)?,
                };
                let step = gpc_cem_step(self.model, task, &dist, state, history, &self.config, &mut self.progress, rng_seed)?;
                self.dist = step.dist.clone();
                step
            }
        };
        Ok(Plan { best_cost: step.report.best_cost, execute: step.best, report: Some(step.report) })
    }
}

/// Closed-loop GPC episode from `x0`.
pub fn gpc_episode(
    model: Option<&FlowModel>,
    task: &Task,
    config: &GpcConfig,
    mode: GpcMode,
    x0: &State,
    seed: u64,
) -> Result<EpisodeTrace> {
    let mut controller = GpcController::new(model, config.clone(), mode)?;
    run_episode(task, &mut controller, x0, config.spc.replan_interval, seed)
}

