//! Offline data collection, success filtering and dataset persistence.

use crate::episode::{EpisodeTrace, History};
use crate::error::{Error, Result};
use crate::flowmodel::{self, encode_condition, FlowArchitecture, FlowModel, NormStats, TrainConfig, TrainingSet};
use crate::gpc::{gpc_episode, GpcConfig, GpcMode};
use crate::spc::{spc_plan_episode, ControlKnots, Interpolation, SpcAlgorithm, SpcConfig};
use crate::tasks::{State, Task, TaskConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub state: State,
    pub history: State,
    /// K rows of m entries.
    pub knots: Vec<Vec<f64>>,
    pub episode_id: u64,
    pub replan_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub condition: NormStats,
    pub knots: NormStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub fingerprint: String,
    pub knot_shape: (usize, usize),
    pub interpolation: Interpolation,
    pub horizon_seconds: f64,
    pub n_records: usize,
    pub stats: DatasetStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
    pub fingerprint: String,
    pub knot_shape: (usize, usize),
    pub interpolation: Interpolation,
    pub horizon_seconds: f64,
    pub stats: DatasetStats,
}

/// One collected episode with its per-replan records.
#[derive(Clone, Debug)]
pub struct CollectedEpisode {
    pub records: Vec<DatasetRecord>,
    pub success: bool,
    pub trace: EpisodeTrace,
}

/// Hex SHA-256 of the canonical JSON form of a task configuration.
pub fn fingerprint(config: &TaskConfig) -> String {
    let json = serde_json::to_string(config).expect("task config serializes");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// One record per replan: the state, its history and the executed knots.
pub fn records_from_trace(trace: &EpisodeTrace, episode_id: u64) -> Vec<DatasetRecord> {
    trace
        .replans
        .iter()
        .enumerate()
        .map(|(i, r)| DatasetRecord {
            state: r.state,
            history: r.history,
            knots: r.plan.rows(),
            episode_id,
            replan_index: i,
        })
        .collect()
}

/// Runs one CEM episode from the initial state drawn with `seed`.
pub fn collect_episode(task: &Task, spc: &SpcConfig, seed: u64) -> Result<CollectedEpisode> {
    let x0 = task.sample_initial_state(seed);
    let trace = spc_plan_episode(task, &SpcConfig { seed, ..spc.clone() }, SpcAlgorithm::Cem, &x0)?;
    Ok(CollectedEpisode { records: records_from_trace(&trace, seed), success: trace.success, trace })
}

/// Runs one GPC-CEM episode (used by the iterative baseline).
pub fn collect_gpc_episode(task: &Task, model: &FlowModel, cfg: &GpcConfig, seed: u64) -> Result<CollectedEpisode> {
    let x0 = task.sample_initial_state(seed);
    let trace = gpc_episode(Some(model), task, cfg, GpcMode::Cem, &x0, seed)?;
    Ok(CollectedEpisode { records: records_from_trace(&trace, seed), success: trace.success, trace })
}

/// Collects episodes with seeds `seed_base, seed_base + 1, ...` until
/// `target_successes` succeeded or `max_episodes` ran. Episodes run in
/// parallel batches; the result is cut at the target in seed order, so it
/// does not depend on scheduling.
pub fn collect_until<F>(target_successes: usize, max_episodes: usize, seed_base: u64, run: F) -> Result<Vec<CollectedEpisode>>
where
    F: Fn(u64) -> Result<CollectedEpisode> + Sync,
{
    let batch = rayon::current_num_threads().max(1) * 2;
    let mut out = Vec::new();
    let mut successes = 0;
    let mut next = 0;
    while successes < target_successes && next < max_episodes {
        let end = (next + batch).min(max_episodes);
        let eps: Vec<CollectedEpisode> =
            (next..end).into_par_iter().map(|i| run(seed_base + i as u64)).collect::<Result<_>>()?;
        for e in eps {
            if successes >= target_successes {
                break;
            }
            successes += e.success as usize;
            log::info!("episode {}: success {} ({} records)", seed_base + out.len() as u64, e.success, e.records.len());
            out.push(e);
        }
        next = end;
    }
    Ok(out)
}

fn condition_of(r: &DatasetRecord) -> Vec<f64> {
    encode_condition(&r.state, &[r.history]).expect("history of length one")
}

fn flat_knots(r: &DatasetRecord) -> Vec<f64> {
    r.knots.concat()
}

/// Per-dimension statistics of the conditioning features and knots.
pub fn compute_stats(records: &[DatasetRecord]) -> Result<DatasetStats> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let conds: Vec<f64> = records.iter().flat_map(condition_of).collect();
    let knots: Vec<f64> = records.iter().flat_map(flat_knots).collect();
    let kd = records[0].knots.iter().map(Vec::len).sum();
    Ok(DatasetStats {
        condition: NormStats::from_rows(&conds, flowmodel::CONDITION_DIM)?,
        knots: NormStats::from_rows(&knots, kd)?,
    })
}

/// Keeps only the records of successful episodes.
pub fn build_dataset(
    episodes: &[(Vec<DatasetRecord>, bool)],
    fingerprint: &str,
    interpolation: Interpolation,
    horizon_seconds: f64,
) -> Result<Dataset> {
    if episodes.is_empty() {
        return Err(Error::InvalidInput("no episodes to build a dataset from".into()));
    }
    let records: Vec<DatasetRecord> =
        episodes.iter().filter(|(_, ok)| *ok).flat_map(|(r, _)| r.iter().cloned()).collect();
    let failed = episodes.iter().filter(|(_, ok)| !*ok).count();
    if failed == episodes.len() || records.is_empty() {
        return Err(Error::NoSuccessfulEpisodes { total: episodes.len(), failed });
    }
    let k = records[0].knots.len();
    let m = records[0].knots.first().map_or(0, Vec::len);
    if records.iter().any(|r| r.knots.len() != k || r.knots.iter().any(|row| row.len() != m)) {
        return Err(Error::Shape("records disagree on knot shape".into()));
    }
    if records.iter().any(|r| r.knots.iter().flatten().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput("non-finite knot value in a record".into()));
    }
    let stats = compute_stats(&records)?;
    Ok(Dataset { records, fingerprint: fingerprint.to_string(), knot_shape: (k, m), interpolation, horizon_seconds, stats })
}

/// Dataset from collected episodes, keyed to `task`.
pub fn dataset_from_episodes(task: &Task, episodes: &[CollectedEpisode], spc: &SpcConfig) -> Result<Dataset> {
    let pairs: Vec<(Vec<DatasetRecord>, bool)> = episodes.iter().map(|e| (e.records.clone(), e.success)).collect();
    build_dataset(&pairs, &fingerprint(task.config()), spc.interpolation, spc.horizon_seconds)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            format_version: DATASET_VERSION,
            fingerprint: self.fingerprint.clone(),
            knot_shape: self.knot_shape,
            interpolation: self.interpolation,
            horizon_seconds: self.horizon_seconds,
            n_records: self.records.len(),
            stats: self.stats.clone(),
        }
    }

    pub fn training_set(&self) -> TrainingSet {
        TrainingSet {
            conds: self.records.iter().flat_map(condition_of).collect(),
            knots: self.records.iter().flat_map(flat_knots).collect(),
            cond_dim: flowmodel::CONDITION_DIM,
            knot_shape: self.knot_shape,
            interpolation: self.interpolation,
            horizon_seconds: self.horizon_seconds,
        }
    }

    /// Appends the records of `other`, which must share the fingerprint
    /// and knot layout, and recomputes the statistics.
    pub fn merge(&mut self, other: &Dataset) -> Result<()> {
        if other.fingerprint != self.fingerprint {
            return Err(Error::FingerprintMismatch { found: other.fingerprint.clone(), expected: self.fingerprint.clone() });
        }
        if other.knot_shape != self.knot_shape || other.horizon_seconds != self.horizon_seconds {
            return Err(Error::Shape("datasets differ in knot layout".into()));
        }
        self.records.extend(other.records.iter().cloned());
        self.stats = compute_stats(&self.records)?;
        Ok(())
    }

    /// Knot record as plan knots.
    pub fn knots_of(&self, r: &DatasetRecord) -> Result<ControlKnots> {
        ControlKnots::from_rows(&r.knots, self.interpolation, self.horizon_seconds)
    }

    pub fn history_of(r: &DatasetRecord) -> History {
        History::new(r.history)
    }
}

/// Writes the header line followed by one JSON record per line.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut w, &ds.header()).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for r in &ds.records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset, checking the format version and, when given, the task
/// fingerprint. Line numbers in errors are 1-based.
pub fn load_dataset(path: &Path, expected_fingerprint: Option<&str>) -> Result<Dataset> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let first = lines.next().ok_or_else(|| Error::MalformedLine { line: 1, reason: "missing header".into() })??;
    let header: DatasetHeader = match serde_json::from_str(&first) {
        Ok(h) => h,
        Err(e) => {
            // surface a version problem before a shape problem
            let v: Option<u32> = serde_json::from_str::<serde_json::Value>(&first)
                .ok()
                .and_then(|v| v.get("format_version")?.as_u64())
                .map(|v| v as u32);
            return Err(match v {
                Some(found) if found != DATASET_VERSION => Error::VersionMismatch { found, expected: DATASET_VERSION },
                _ => Error::MalformedLine { line: 1, reason: e.to_string() },
            });
        }
    };
    if header.format_version != DATASET_VERSION {
        return Err(Error::VersionMismatch { found: header.format_version, expected: DATASET_VERSION });
    }
    if let Some(expected) = expected_fingerprint {
        if header.fingerprint != expected {
            return Err(Error::FingerprintMismatch { found: header.fingerprint, expected: expected.to_string() });
        }
    }
    let mut records = Vec::with_capacity(header.n_records);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let r: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine { line: i + 2, reason: e.to_string() })?;
        let shape_ok = r.knots.len() == header.knot_shape.0 && r.knots.iter().all(|row| row.len() == header.knot_shape.1);
        if !shape_ok {
            return Err(Error::MalformedLine { line: i + 2, reason: "knot shape differs from header".into() });
        }
        records.push(r);
    }
    if records.len() != header.n_records {
        return Err(Error::MalformedLine {
            line: records.len() + 2,
            reason: format!("header announces {} records, found {}", header.n_records, records.len()),
        });
    }
    Ok(Dataset {
        records,
        fingerprint: header.fingerprint,
        knot_shape: header.knot_shape,
        interpolation: header.interpolation,
        horizon_seconds: header.horizon_seconds,
        stats: header.stats,
    })
}

/// Settings of the alternating collect/train baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IterativeConfig {
    pub collect: SpcConfig,
    pub gpc: GpcConfig,
    pub episodes_per_round: usize,
    pub architecture: FlowArchitecture,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        let collect = SpcConfig::offline();
        Self {
            gpc: GpcConfig { spc: collect.clone(), ..GpcConfig::default() },
            collect,
            episodes_per_round: 100,
            architecture: FlowArchitecture::default(),
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RoundMetrics {
    pub round: usize,
    pub n_episodes: usize,
    pub n_success: usize,
    pub success_rate: f64,
    /// Mean over episodes of the per-episode elite CEM fraction; `None` for
    /// plain CEM collection.
    pub mean_elite_cem_fraction: Option<f64>,
    pub n_records: usize,
    pub final_loss: f64,
}

/// Round 0 collects with CEM; every later round collects with GPC-CEM
/// driven by the previous model. After each round a fresh model is trained
/// on all successful records gathered so far. Rounds without successes are
/// skipped (the previous model is kept) and do not appear in the output.
pub fn iterative_collect_train(task: &Task, rounds: usize, cfg: &IterativeConfig) -> Result<Vec<(FlowModel, RoundMetrics)>> {
    if rounds == 0 {
        return Err(Error::InvalidConfig("rounds must be >= 1".into()));
    }
    let mut out: Vec<(FlowModel, RoundMetrics)> = Vec::new();
    let mut data: Option<Dataset> = None;
    for round in 0..rounds {
        let seed_base = crate::seed::derive(cfg.seed, round as u64);
        let model = out.last().map(|(m, _)| m.clone());
        let episodes: Vec<CollectedEpisode> = (0..cfg.episodes_per_round)
            .into_par_iter()
            .map(|i| {
                let s = seed_base.wrapping_add(i as u64);
                match &model {
                    None => collect_episode(task, &cfg.collect, s),
                    Some(m) => collect_gpc_episode(task, m, &cfg.gpc, s),
                }
            })
            .collect::<Result<_>>()?;
        let n_success = episodes.iter().filter(|e| e.success).count();
        let fractions: Vec<f64> = episodes.iter().filter_map(|e| e.trace.mean_elite_cem_fraction()).collect();
        let mean_fraction = (!fractions.is_empty()).then(|| fractions.iter().sum::<f64>() / fractions.len() as f64);
        log::info!("round {round}: {n_success}/{} successes, elite cem fraction {mean_fraction:?}", episodes.len());
        let fresh = match dataset_from_episodes(task, &episodes, &cfg.collect) {
            Ok(d) => d,
            Err(Error::NoSuccessfulEpisodes { .. }) => {
                log::warn!("round {round}: no successful episodes, keeping the previous model");
                continue;
            }
            Err(e) => return Err(e),
        };
        match &mut data {
            None => data = Some(fresh),
            Some(d) => d.merge(&fresh)?,
        }
        let ds = data.as_ref().unwrap();
        let train_cfg = TrainConfig { seed: crate::seed::derive(cfg.train.seed, round as u64), ..cfg.train.clone() };
        let (model, log) = flowmodel::train(&ds.training_set(), &cfg.architecture, &train_cfg)?;
        let metrics = RoundMetrics {
            round,
            n_episodes: episodes.len(),
            n_success,
            success_rate: n_success as f64 / episodes.len() as f64,
            mean_elite_cem_fraction: mean_fraction,
            n_records: ds.len(),
            final_loss: log.epoch_loss.last().copied().unwrap_or(f64::NAN),
        };
        out.push((model, metrics));
    }
    Ok(out)
}

