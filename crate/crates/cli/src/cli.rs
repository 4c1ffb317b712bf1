//! `gpc` command line.

use crate::harness::{run_eval, Method, MethodSpec};
use crate::render::{render_trajectory, TraceFile, DEFAULT_SNAPSHOT_INTERVAL};
use crate::report::{emit_report, ReportFormat};
use clap::{Args, Parser, Subcommand};
use gpc_core::config::ExperimentConfig;
use gpc_core::datagen::{self, collect_episode, collect_until, dataset_from_episodes, load_dataset, save_dataset};
use gpc_core::flowmodel::{self, FlowModel};
use gpc_core::tasks::{Task, TaskKind};
use gpc_core::Error;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gpc", version, about = "Sampling-based control with learned flow proposals")]
struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run CEM episodes and keep the successful ones as a dataset.
    Collect {
        #[arg(long, default_value = "push_t")]
        task: TaskKind,
        /// Maximum number of episodes.
        #[arg(long)]
        episodes: usize,
        /// Stop once this many episodes succeeded.
        #[arg(long)]
        target_successes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a flow model to a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Check the dataset fingerprint against this task.
        #[arg(long)]
        task: Option<TaskKind>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate one or more methods on a shared seed set.
    Eval {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        horizon: Option<f64>,
        /// Directory for per-episode traces and step reports.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Evaluate at several planning horizons (seconds).
    AblateHorizon {
        #[arg(required = true)]
        horizons: Vec<f64>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Alternate data collection and training.
    Iterate {
        #[arg(long)]
        rounds: usize,
        #[arg(long, default_value = "push_t")]
        task: TaskKind,
        #[arg(long)]
        episodes_per_round: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a saved trace as SVG.
    Render {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SNAPSHOT_INTERVAL)]
        interval: usize,
    },
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// cem, mppi, gpc-shoot or gpc-cem; repeat for a paired table.
    #[arg(long = "method", required = true)]
    methods: Vec<Method>,
    #[arg(long, default_value = "push_t")]
    task: TaskKind,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    episodes: usize,
    #[arg(long)]
    denoise_steps: Option<usize>,
    #[arg(long)]
    cem_ratio: Option<f64>,
    #[arg(long)]
    rollouts: Option<usize>,
    /// Report path; format from --format or the extension.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<ReportFormat>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Entry point; `argv[0]` is the program name. Returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> std::result::Result<ExperimentConfig, Failure> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::ConfigFile { .. } => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other),
        }),
    }
}

fn run(cli: Cli) -> Outcome {
    let cfg = load_config(&cli.config)?;
    match cli.command {
        Command::Collect { task, episodes, target_successes, out } => collect(&cfg, task, episodes, target_successes, &out, cli.seed),
        Command::Train { dataset, out, task, epochs } => train(&cfg, &dataset, &out, task, epochs, cli.seed),
        Command::Eval { eval, horizon, trace_dir } => {
            let rows = evaluate(&cfg, &eval, horizon, trace_dir.as_deref(), cli.seed, None)?;
            write_report(&rows, &eval)
        }
        Command::AblateHorizon { horizons, eval } => {
            let mut rows = Vec::new();
            for h in horizons {
                rows.extend(evaluate(&cfg, &eval, Some(h), None, cli.seed, Some(format!("h={h}s")))?);
            }
            write_report(&rows, &eval)
        }
        Command::Iterate { rounds, task, episodes_per_round, epochs, out } => {
            iterate(&cfg, rounds, task, episodes_per_round, epochs, out.as_deref(), cli.seed)
        }
        Command::Render { trace, out, interval } => {
            let text = std::fs::read_to_string(&trace).map_err(Error::from)?;
            let tf: TraceFile = serde_json::from_str(&text)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", trace.display())))?;
            let task = Task::new(tf.task)?;
            render_trajectory(&task, &tf.trace, &out, interval)?;
            Ok(())
        }
    }
}

fn collect(cfg: &ExperimentConfig, kind: TaskKind, episodes: usize, target: Option<usize>, out: &Path, seed: u64) -> Outcome {
    if episodes == 0 {
        return Err(Failure::Usage("--episodes must be >= 1".into()));
    }
    let task = Task::new(cfg.task_config(Some(kind)))?;
    let spc = &cfg.collect;
    spc.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let eps = collect_until(target.unwrap_or(episodes), episodes, seed, |s| collect_episode(&task, spc, s))?;
    let ok = eps.iter().filter(|e| e.success).count();
    let ds = dataset_from_episodes(&task, &eps, spc)?;
    save_dataset(&ds, out)?;
    println!("collected {} episodes, {ok} successful, {} records -> {}", eps.len(), ds.len(), out.display());
    Ok(())
}

fn train(cfg: &ExperimentConfig, dataset: &Path, out: &Path, kind: Option<TaskKind>, epochs: Option<usize>, seed: u64) -> Outcome {
    let expected = kind.map(|k| datagen::fingerprint(&cfg.task_config(Some(k))));
    let ds = load_dataset(dataset, expected.as_deref())?;
    let mut tc = cfg.train.clone();
    tc.seed = seed;
    if let Some(e) = epochs {
        tc.total_epochs = e;
    }
    tc.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let (model, log) = flowmodel::train(&ds.training_set(), &cfg.architecture, &tc)?;
    model.save(out)?;
    println!(
        "trained on {} records for {} steps, loss {:.4} -> {:.4} -> {}",
        ds.len(),
        log.steps,
        log.epoch_loss.first().copied().unwrap_or(f64::NAN),
        log.epoch_loss.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn evaluate(
    cfg: &ExperimentConfig,
    a: &EvalArgs,
    horizon: Option<f64>,
    trace_dir: Option<&Path>,
    seed: u64,
    suffix: Option<String>,
) -> std::result::Result<Vec<crate::harness::EvalSummary>, Failure> {
    if a.episodes == 0 {
        return Err(Failure::Usage("--episodes must be >= 1".into()));
    }
    if let Some(m) = a.methods.iter().find(|m| m.needs_model()) {
        if a.model.is_none() {
            return Err(Failure::Usage(format!("method {} requires --model", m.name())));
        }
    }
    let mut g = cfg.gpc_config();
    if let Some(h) = horizon {
        g.spc.horizon_seconds = h;
    }
    if let Some(n) = a.denoise_steps {
        g.n_denoise = n;
    }
    if let Some(r) = a.cem_ratio {
        g.cem_sample_ratio = r;
    }
    if let Some(n) = a.rollouts {
        g.spc.n_rollouts = n;
    }
    g.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let model = match &a.model {
        Some(p) => Some(FlowModel::load(p)?),
        None => None,
    };
    let task = Task::new(cfg.task_config(Some(a.task)))?;
    let mut rows = Vec::new();
    for &m in &a.methods {
        let mut spec = MethodSpec::new(m, g.clone(), model.as_ref());
        if let Some(s) = &suffix {
            spec.label = Some(format!("{} ({s})", m.name()));
        }
        let out = run_eval(&spec, &task, a.episodes, seed)?;
        if let Some(dir) = trace_dir {
            write_traces(dir, &task, &spec.label(), seed, &out.traces)?;
        }
        rows.push(out.summary);
    }
    Ok(rows)
}

fn write_traces(dir: &Path, task: &Task, method: &str, seed_base: u64, traces: &[gpc_core::episode::EpisodeTrace]) -> gpc_core::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, tr) in traces.iter().enumerate() {
        let stem = format!("{method}_{i:04}");
        let tf = TraceFile { method: method.to_string(), seed: seed_base + i as u64, task: task.config().clone(), trace: tr.clone() };
        std::fs::write(dir.join(format!("{stem}.trace.json")), serde_json::to_string(&tf).expect("trace serializes"))?;
        let mut steps = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.steps.jsonl")))?);
        for (k, r) in tr.replans.iter().enumerate() {
            let (cem, flow) = r.report.as_ref().map_or((0, 0), |r| r.provenance_counts());
            let line = serde_json::json!({
                "step": r.state.step_index,
                "replan": k,
                "best_cost": r.best_cost,
                "elite_cem_fraction": r.report.as_ref().map(|r| r.elite_cem_fraction),
                "cem_candidates": cem,
                "flow_candidates": flow,
            });
            writeln!(steps, "{line}")?;
        }
        steps.flush()?;
    }
    Ok(())
}

fn write_report(rows: &[crate::harness::EvalSummary], a: &EvalArgs) -> Outcome {
    print!("{}", crate::report::render_markdown(rows));
    if let Some(out) = &a.out {
        let format = a.format.unwrap_or_else(|| ReportFormat::from_path(out));
        emit_report(rows, format, out)?;
    }
    Ok(())
}

fn iterate(
    cfg: &ExperimentConfig,
    rounds: usize,
    kind: TaskKind,
    per_round: Option<usize>,
    epochs: Option<usize>,
    out: Option<&Path>,
    seed: u64,
) -> Outcome {
    if rounds == 0 {
        return Err(Failure::Usage("--rounds must be >= 1".into()));
    }
    let task = Task::new(cfg.task_config(Some(kind)))?;
    let mut ic = cfg.iterative_config(seed);
    if let Some(n) = per_round {
        ic.episodes_per_round = n;
    }
    if let Some(e) = epochs {
        ic.train.total_epochs = e;
    }
    ic.train.seed = seed;
    let results = datagen::iterative_collect_train(&task, rounds, &ic)?;
    let mut text = String::from("round,n_episodes,n_success,success_rate,elite_cem_fraction,n_records,final_loss\n");
    for (_, m) in &results {
        let frac = m.mean_elite_cem_fraction.map(|f| format!("{f:.3}")).unwrap_or_default();
        println!("round {}: success {:.3} ({}/{}), elite_cem_fraction {}", m.round, m.success_rate, m.n_success, m.n_episodes, if frac.is_empty() { "-" } else { &frac });
        text.push_str(&format!(
            "{},{},{},{:.3},{frac},{},{:.6}\n",
            m.round, m.n_episodes, m.n_success, m.success_rate, m.n_records, m.final_loss
        ));
    }
    if let Some(p) = out {
        std::fs::write(p, text).map_err(Error::from)?;
        if let Some((model, _)) = results.last() {
            model.save(&p.with_extension("ckpt"))?;
        }
    }
    Ok(())
}
