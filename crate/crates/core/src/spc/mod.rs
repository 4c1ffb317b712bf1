//! Sampling-based predictive control over spline knots: diagonal-Gaussian
//! sampling with action-level annealing, CEM and MPPI updates, the
//! progress-based variance reset, and the receding-horizon controller.

mod knots;

pub use knots::{ControlKnots, Interpolant, Interpolation};

use crate::episode::{run_episode, Controller, EpisodeTrace, History, Plan};
use crate::error::{Error, Result};
use crate::seed;
use crate::tasks::{State, Task};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Diagonal Gaussian over knot matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingDistribution {
    pub mean: ControlKnots,
    /// Per-entry variances, same layout as `mean`.
    pub variances: Vec<f64>,
    pub initial_variance: f64,
}

impl SamplingDistribution {
    pub fn new(mean: ControlKnots, initial_variance: f64) -> Result<Self> {
        if !(initial_variance >= 0.0 && initial_variance.is_finite()) {
            return Err(Error::InvalidInput(format!("initial variance {initial_variance}")));
        }
        let variances = vec![initial_variance; mean.values().len()];
        Ok(Self { mean, variances, initial_variance })
    }

    /// Raises every variance to at least `floor`.
    pub fn floor_variances(&mut self, floor: f64) {
        for v in &mut self.variances {
            *v = v.max(floor);
        }
    }
}

/// Which candidate becomes the CEM mean (and the executed plan).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CemMean {
    /// Mean of the elite set.
    EliteMean,
    /// The single lowest-cost candidate.
    BestCandidate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpcAlgorithm {
    Cem,
    Mppi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpcConfig {
    pub n_rollouts: usize,
    pub n_elite: usize,
    pub mppi_temperature: f64,
    pub annealing_alpha: f64,
    pub reset_window: usize,
    /// Relative distance improvement below which the window counts as stalled.
    pub reset_threshold: f64,
    /// Simulator steps executed between replans.
    pub replan_interval: usize,
    pub seed: u64,
    pub horizon_seconds: f64,
    pub n_knots: usize,
    pub interpolation: Interpolation,
    /// Standard deviation of fresh (and reset) distributions.
    pub initial_std: f64,
    /// Variance floor as a fraction of the initial variance.
    pub variance_floor: f64,
    pub cem_mean: CemMean,
}

impl Default for SpcConfig {
    fn default() -> Self {
        Self {
            n_rollouts: 32,
            n_elite: 4,
            mppi_temperature: 50.0,
            annealing_alpha: 1.0,
            reset_window: 10,
            reset_threshold: 0.01,
            replan_interval: 10,
            seed: 0,
            horizon_seconds: 3.0,
            n_knots: 4,
            interpolation: Interpolation::CubicSpline,
            initial_std: 40.0,
            variance_floor: 1e-4,
            cem_mean: CemMean::BestCandidate,
        }
    }
}

impl SpcConfig {
    /// Data-collection regime: more rollouts per replan.
    pub fn offline() -> Self {
        Self { n_rollouts: 64, n_elite: 8, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_rollouts == 0 || self.n_elite == 0 || self.n_elite > self.n_rollouts {
            return bad(format!("need 1 <= n_elite ({}) <= n_rollouts ({})", self.n_elite, self.n_rollouts));
        }
        if self.replan_interval == 0 {
            return bad("replan_interval must be >= 1".into());
        }
        if !(self.mppi_temperature > 0.0) {
            return bad("mppi_temperature must be positive".into());
        }
        if !(self.annealing_alpha >= 0.0) {
            return bad("annealing_alpha must be nonnegative".into());
        }
        if self.n_knots < 2 {
            return bad("n_knots must be >= 2".into());
        }
        if !(self.horizon_seconds > 0.0) || !(self.initial_std >= 0.0) || !(self.variance_floor >= 0.0) {
            return bad("horizon, initial_std and variance_floor must be nonnegative (horizon positive)".into());
        }
        Ok(())
    }

    pub fn initial_variance(&self) -> f64 {
        self.initial_std * self.initial_std
    }

    /// Fresh distribution: the robot position at every knot for pushing
    /// tasks, zero velocity for point-mass reach.
    pub fn initial_distribution(&self, task: &Task, state: &State) -> Result<SamplingDistribution> {
        let value = if task.kind().is_pushing() { state.robot_pos } else { [0.0, 0.0] };
        let mean = ControlKnots::constant(self.n_knots, &value, self.interpolation, self.horizon_seconds)?;
        SamplingDistribution::new(mean, self.initial_variance())
    }
}

/// Variance multiplier of knot `k` of `n_knots`: `(1 + alpha k/(K-1))^2`.
pub fn annealing_scale(alpha: f64, k: usize, n_knots: usize) -> f64 {
    let r = 1.0 + alpha * k as f64 / (n_knots - 1) as f64;
    r * r
}

/// Draws `n` candidates from the annealed distribution.
pub fn sample_candidates(dist: &SamplingDistribution, n: usize, alpha: f64, rng_seed: u64) -> Vec<ControlKnots> {
    let mut rng = seed::rng(rng_seed);
    let (kn, m) = (dist.mean.n_knots(), dist.mean.dim());
    let std: Vec<f64> = (0..kn * m)
        .map(|i| (dist.variances[i] * annealing_scale(alpha, i / m, kn)).sqrt())
        .collect();
    (0..n)
        .map(|_| {
            let values = dist
                .mean
                .values()
                .iter()
                .zip(&std)
                .map(|(&mu, &s)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mu + s * z
                })
                .collect();
            dist.mean.with_values(values)
        })
        .collect()
}

/// Gaussian candidates for one replan, clamped to the task's control bounds.
pub fn sample_bounded(task: &Task, dist: &SamplingDistribution, n: usize, alpha: f64, replan_seed: u64) -> Vec<ControlKnots> {
    let mut c = sample_candidates(dist, n, alpha, seed::derive(replan_seed, seed::STREAM_GAUSSIAN));
    for k in &mut c {
        task.clamp_knots(k.values_mut());
    }
    c
}

/// Rollout cost of each candidate from `state`. Candidates whose rollout
/// fails get a NaN cost.
pub fn evaluate_candidates(task: &Task, state: &State, candidates: &[ControlKnots], progress_ref: Option<f64>) -> Vec<f64> {
    candidates
        .par_iter()
        .map(|c| {
            c.interpolate_planar(task.dt())
                .and_then(|u| task.rollout_cost(state, &u, progress_ref))
                .unwrap_or(f64::NAN)
        })
        .collect()
}

/// Indices of the `n` lowest-cost candidates, ascending by cost, ties to the
/// lower index. NaN costs never qualify.
pub fn select_elites(costs: &[f64], n: usize) -> Result<Vec<usize>> {
    let mut idx: Vec<usize> = (0..costs.len()).filter(|&i| !costs[i].is_nan()).collect();
    if idx.is_empty() {
        return Err(Error::NoFiniteCosts);
    }
    idx.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
    idx.truncate(n.max(1));
    Ok(idx)
}

/// Elementwise mean and population variance of the chosen candidates.
pub fn elite_statistics(candidates: &[ControlKnots], elites: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let d = candidates[elites[0]].values().len();
    let n = elites.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in elites {
        for (m, v) in mean.iter_mut().zip(candidates[i].values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for &i in elites {
        for ((s, v), m) in var.iter_mut().zip(candidates[i].values()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

fn check_batch(dist: &SamplingDistribution, candidates: &[ControlKnots], costs: &[f64]) -> Result<()> {
    if candidates.len() != costs.len() || candidates.is_empty() {
        return Err(Error::Shape(format!("{} candidates, {} costs", candidates.len(), costs.len())));
    }
    let len = dist.mean.values().len();
    if candidates.iter().any(|c| c.values().len() != len) {
        return Err(Error::Shape("candidate shape differs from the distribution".into()));
    }
    Ok(())
}

/// Cross-entropy update: refit mean and variances to the elite set.
pub fn cem_update(
    dist: &SamplingDistribution,
    candidates: &[ControlKnots],
    costs: &[f64],
    n_elite: usize,
) -> Result<SamplingDistribution> {
    check_batch(dist, candidates, costs)?;
    let elites = select_elites(costs, n_elite)?;
    let (mean, variances) = elite_statistics(candidates, &elites);
    Ok(SamplingDistribution { mean: dist.mean.with_values(mean), variances, initial_variance: dist.initial_variance })
}

/// Normalized path-integral weights `exp(-(J - min J)/lambda)`; NaN costs weigh zero.
pub fn mppi_weights(costs: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidInput(format!("temperature {temperature} must be positive")));
    }
    let min = costs.iter().copied().filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::NoFiniteCosts);
    }
    let mut w: Vec<f64> = costs
        .iter()
        .map(|&c| if c.is_finite() { (-(c - min) / temperature).exp() } else { 0.0 })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// MPPI update: cost-weighted mean, variances unchanged.
pub fn mppi_update(
    dist: &SamplingDistribution,
    candidates: &[ControlKnots],
    costs: &[f64],
    temperature: f64,
) -> Result<SamplingDistribution> {
    check_batch(dist, candidates, costs)?;
    let w = mppi_weights(costs, temperature)?;
    let mut mean = vec![0.0; dist.mean.values().len()];
    for (c, &wi) in candidates.iter().zip(&w) {
        for (m, v) in mean.iter_mut().zip(c.values()) {
            *m += wi * v;
        }
    }
    Ok(SamplingDistribution { mean: dist.mean.with_values(mean), ..dist.clone() })
}

/// True when the goal distance improved by at most `threshold` (relative)
/// across the last `window` entries.
pub fn progress_stalled(history: &[f64], window: usize, threshold: f64) -> bool {
    if window == 0 || history.len() < window {
        return false;
    }
    let old = history[history.len() - window];
    let new = history[history.len() - 1];
    old - new <= threshold * old
}

/// Resets all variances to `initial_variance` when progress stalled over the
/// last `window` replans (1% relative improvement threshold).
pub fn variance_reset(
    dist: &SamplingDistribution,
    progress_history: &[f64],
    window: usize,
    initial_variance: f64,
) -> SamplingDistribution {
    let mut out = dist.clone();
    if progress_stalled(progress_history, window, 0.01) {
        out.variances.iter_mut().for_each(|v| *v = initial_variance);
    }
    out
}

/// Best candidate by the elite ordering rule.
pub(crate) fn argmin(costs: &[f64]) -> Result<usize> {
    Ok(select_elites(costs, 1)?[0])
}

/// Receding-horizon CEM or MPPI controller.
pub struct SpcController {
    config: SpcConfig,
    algorithm: SpcAlgorithm,
    dist: Option<SamplingDistribution>,
    progress: Vec<f64>,
}

impl SpcController {
    pub fn new(config: SpcConfig, algorithm: SpcAlgorithm) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, algorithm, dist: None, progress: Vec::new() })
    }

    pub fn distribution(&self) -> Option<&SamplingDistribution> {
        self.dist.as_ref()
    }
}

/// Shared tail of every CEM-style update: variance floor, progress-based
/// reset, then the shifted mean for the next replan.
pub(crate) fn finish_cem_update(
    cfg: &SpcConfig,
    task: &Task,
    state: &State,
    progress: &mut Vec<f64>,
    mut next: SamplingDistribution,
    new_mean: &ControlKnots,
) -> SamplingDistribution {
    next.floor_variances(cfg.variance_floor * cfg.initial_variance());
    progress.push(task.goal_distance(state));
    if progress_stalled(progress, cfg.reset_window, cfg.reset_threshold) {
        next.variances.iter_mut().for_each(|v| *v = cfg.initial_variance());
        progress.clear();
    }
    next.mean = new_mean.shift(replan_elapsed(cfg, new_mean, task));
    next
}

pub(crate) fn replan_elapsed(cfg: &SpcConfig, knots: &ControlKnots, task: &Task) -> f64 {
    cfg.replan_interval as f64 * knots.sample_spacing(task.dt())
}

impl Controller for SpcController {
    fn plan(&mut self, task: &Task, state: &State, history: &History, rng_seed: u64) -> Result<Plan> {
        let cfg = &self.config;
        let dist = match self.dist.take() {
            Some(d) => d,
            None => cfg.initial_distribution(task, state)?,
        };
        let candidates = sample_bounded(task, &dist, cfg.n_rollouts, cfg.annealing_alpha, rng_seed);
        let progress_ref = Some(task.goal_distance(&history.prev_replanning_state));
        let costs = evaluate_candidates(task, state, &candidates, progress_ref);
        let best = argmin(&costs)?;
        let (execute, next) = match self.algorithm {
            SpcAlgorithm::Cem => {
                let next = cem_update(&dist, &candidates, &costs, cfg.n_elite)?;
                let execute = match cfg.cem_mean {
                    CemMean::EliteMean => next.mean.clone(),
                    CemMean::BestCandidate => candidates[best].clone(),
                };
                let next = finish_cem_update(cfg, task, state, &mut self.progress, next, &execute);
                (execute, next)
            }
            SpcAlgorithm::Mppi => {
                let mut next = mppi_update(&dist, &candidates, &costs, cfg.mppi_temperature)?;
                let execute = next.mean.clone();
                next.mean = execute.shift(replan_elapsed(cfg, &execute, task));
                (execute, next)
            }
        };
        self.dist = Some(next);
        Ok(Plan { execute, best_cost: costs[best], report: None })
    }
}

/// Closed-loop CEM or MPPI episode from `x0`, seeded by `spc.seed`.
pub fn spc_plan_episode(task: &Task, spc: &SpcConfig, algorithm: SpcAlgorithm, x0: &State) -> Result<EpisodeTrace> {
    let mut controller = SpcController::new(spc.clone(), algorithm)?;
    run_episode(task, &mut controller, x0, spc.replan_interval, spc.seed)
}

