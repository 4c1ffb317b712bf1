//! Evaluation over shared seed sets and Wilson-interval summaries.

use gpc_core::episode::EpisodeTrace;
use gpc_core::flowmodel::FlowModel;
use gpc_core::gpc::{gpc_episode, GpcConfig, GpcMode};
use gpc_core::spc::{spc_plan_episode, SpcAlgorithm};
use gpc_core::tasks::Task;
use gpc_core::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;

/// Wilson score interval for `successes` out of `n`, clipped to [0, 1].
pub fn wilson_ci(successes: usize, n: usize, z: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidInput("Wilson interval needs n >= 1".into()));
    }
    if successes > n {
        return Err(Error::InvalidInput(format!("{successes} successes out of {n}")));
    }
    let (k, n) = (successes as f64, n as f64);
    let p = k / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cem,
    Mppi,
    GpcShoot,
    GpcCem,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cem => "cem",
            Method::Mppi => "mppi",
            Method::GpcShoot => "gpc-shoot",
            Method::GpcCem => "gpc-cem",
        }
    }

    pub fn needs_model(self) -> bool {
        matches!(self, Method::GpcShoot | Method::GpcCem)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cem" => Ok(Method::Cem),
            "mppi" => Ok(Method::Mppi),
            "gpc-shoot" => Ok(Method::GpcShoot),
            "gpc-cem" => Ok(Method::GpcCem),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

/// A method with its controller settings; `config.spc` drives the plain
/// SPC baselines.
#[derive(Clone, Debug)]
pub struct MethodSpec<'m> {
    pub method: Method,
    pub config: GpcConfig,
    pub model: Option<&'m FlowModel>,
    /// Report label; defaults to the method name.
    pub label: Option<String>,
}

impl<'m> MethodSpec<'m> {
    pub fn new(method: Method, config: GpcConfig, model: Option<&'m FlowModel>) -> Self {
        Self { method, config, model, label: None }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.method.name().to_string())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalSummary {
    pub method: String,
    pub seed_base: u64,
    pub n_episodes: usize,
    pub n_success: usize,
    pub success_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// Over successful episodes; steps include the success step.
    pub steps_mean: Option<f64>,
    /// Sample standard deviation; needs two successes.
    pub steps_std: Option<f64>,
    pub mean_cem_ratio: Option<f64>,
    /// Machine dependent, so kept out of serialized reports.
    #[serde(skip)]
    pub wall_time_per_replan: f64,
}

/// Equality ignores the wall-clock field.
impl PartialEq for EvalSummary {
    fn eq(&self, o: &Self) -> bool {
        self.method == o.method
            && self.seed_base == o.seed_base
            && self.n_episodes == o.n_episodes
            && self.n_success == o.n_success
            && self.success_rate == o.success_rate
            && self.wilson_low == o.wilson_low
            && self.wilson_high == o.wilson_high
            && self.steps_mean == o.steps_mean
            && self.steps_std == o.steps_std
            && self.mean_cem_ratio == o.mean_cem_ratio
    }
}

impl EvalSummary {
    pub fn from_traces(method: &str, seed_base: u64, traces: &[EpisodeTrace]) -> Result<Self> {
        let n = traces.len();
        let steps: Vec<f64> = traces.iter().filter_map(|t| t.success_step).map(|s| s as f64).collect();
        let k = steps.len();
        let (low, high) = wilson_ci(k, n, Z95)?;
        let mean = (k > 0).then(|| steps.iter().sum::<f64>() / k as f64);
        let std = mean.filter(|_| k > 1).map(|m| (steps.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt());
        let ratios: Vec<f64> = traces.iter().filter_map(EpisodeTrace::mean_elite_cem_fraction).collect();
        let replans: usize = traces.iter().map(|t| t.replans.len()).sum();
        let seconds: f64 = traces.iter().map(|t| t.planning_seconds).sum();
        Ok(Self {
            method: method.to_string(),
            seed_base,
            n_episodes: n,
            n_success: k,
            success_rate: k as f64 / n as f64,
            wilson_low: low,
            wilson_high: high,
            steps_mean: mean,
            steps_std: std,
            mean_cem_ratio: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
            wall_time_per_replan: if replans > 0 { seconds / replans as f64 } else { 0.0 },
        })
    }
}

/// Runs one episode of `spec` from the initial state of `seed`.
pub fn run_episode_for(spec: &MethodSpec, task: &Task, seed: u64) -> Result<EpisodeTrace> {
    let x0 = task.sample_initial_state(seed);
    let spc = gpc_core::spc::SpcConfig { seed, ..spec.config.spc.clone() };
    match spec.method {
        Method::Cem => spc_plan_episode(task, &spc, SpcAlgorithm::Cem, &x0),
        Method::Mppi => spc_plan_episode(task, &spc, SpcAlgorithm::Mppi, &x0),
        Method::GpcShoot => gpc_episode(spec.model, task, &spec.config, GpcMode::Shoot, &x0, seed),
        Method::GpcCem => gpc_episode(spec.model, task, &spec.config, GpcMode::Cem, &x0, seed),
    }
}

/// Evaluation outcome with the per-episode traces in seed order.
pub struct EvalOutcome {
    pub summary: EvalSummary,
    pub traces: Vec<EpisodeTrace>,
}

/// Runs `n_episodes` episodes on the seeds `seed_base + i`.
pub fn run_eval(spec: &MethodSpec, task: &Task, n_episodes: usize, seed_base: u64) -> Result<EvalOutcome> {
    if n_episodes == 0 {
        return Err(Error::InvalidConfig("evaluation needs at least one episode".into()));
    }
    if spec.method.needs_model() && spec.model.is_none() {
        return Err(Error::InvalidConfig(format!("method {} requires a trained model", spec.method.name())));
    }
    let traces: Vec<EpisodeTrace> = (0..n_episodes)
        .into_par_iter()
        .map(|i| run_episode_for(spec, task, seed_base + i as u64))
        .collect::<Result<_>>()?;
    let summary = EvalSummary::from_traces(&spec.label(), seed_base, &traces)?;
    log::info!(
        "{}: {}/{} successes, {:.4} s per replan",
        summary.method,
        summary.n_success,
        summary.n_episodes,
        summary.wall_time_per_replan
    );
    Ok(EvalOutcome { summary, traces })
}
