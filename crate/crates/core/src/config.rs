//! TOML experiment configuration. Every section and field is optional and
//! falls back to the built-in defaults.

use crate::datagen::IterativeConfig;
use crate::error::{Error, Result};
use crate::flowmodel::{FlowArchitecture, TrainConfig};
use crate::gpc::GpcConfig;
use crate::spc::SpcConfig;
use crate::tasks::{TaskConfig, TaskKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub kind: Option<TaskKind>,
    pub max_steps: Option<usize>,
    /// Replaces individual weights of the task's defaults.
    pub cost_weights: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpcSection {
    pub cem_sample_ratio: f64,
    pub n_denoise: usize,
}

impl Default for GpcSection {
    fn default() -> Self {
        let g = GpcConfig::default();
        Self { cem_sample_ratio: g.cem_sample_ratio, n_denoise: g.n_denoise }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskSection,
    /// Online controller settings (evaluation).
    pub spc: SpcConfig,
    /// Offline controller settings (data collection).
    pub collect: SpcConfig,
    pub gpc: GpcSection,
    pub train: TrainConfig,
    pub architecture: FlowArchitecture,
    pub episodes_per_round: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskSection::default(),
            spc: SpcConfig::default(),
            collect: SpcConfig::offline(),
            gpc: GpcSection::default(),
            train: TrainConfig::default(),
            architecture: FlowArchitecture::default(),
            episodes_per_round: IterativeConfig::default().episodes_per_round,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|reason| Error::ConfigFile { path: path.to_path_buf(), reason })
    }

    /// Task for `kind` (or the file's kind, else Push-T) with overrides applied.
    pub fn task_config(&self, kind: Option<TaskKind>) -> TaskConfig {
        let mut c = TaskConfig::for_kind(kind.or(self.task.kind).unwrap_or(TaskKind::PushT));
        if let Some(m) = self.task.max_steps {
            c.max_steps = m;
        }
        for (k, v) in &self.task.cost_weights {
            c.cost_weights.insert(k.clone(), *v);
        }
        c
    }

    pub fn gpc_config(&self) -> GpcConfig {
        GpcConfig { spc: self.spc.clone(), cem_sample_ratio: self.gpc.cem_sample_ratio, n_denoise: self.gpc.n_denoise }
    }

    pub fn iterative_config(&self, seed: u64) -> IterativeConfig {
        IterativeConfig {
            collect: self.collect.clone(),
            gpc: GpcConfig { spc: self.collect.clone(), ..self.gpc_config() },
            episodes_per_round: self.episodes_per_round,
            architecture: self.architecture.clone(),
            train: self.train.clone(),
            seed,
        }
    }
}
