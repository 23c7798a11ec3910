use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strata_core::llm::HttpConfig;
use strata_core::optimizer::BoConfig;
use strata_core::retrieval::HttpEmbedderConfig;
use strata_core::simulation::SpiceConfig;

use crate::tasks::TASK_COUNT;
use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LlmKind {
    #[default]
    Scripted,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SimKind {
    #[default]
    Mock,
    Spice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Hash,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    pub disable_em: bool,
    pub disable_io: bool,
    pub disable_knowledge: bool,
}

/// Everything a benchmark run needs. Loadable from TOML; every field has a
/// default so a config file only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    /// 1-based task numbers.
    pub tasks: Vec<u32>,
    pub trials: u32,
    pub k: u32,
    pub max_iterations: u32,
    pub ablations: Ablations,
    pub llm: LlmKind,
    pub sim: SimKind,
    pub embedder: EmbedderKind,
    pub seed: u64,
    /// Share one on-disk memory across trials instead of a fresh one each.
    pub persist_memory: bool,
    pub reselect_on_failure: bool,
    /// Directory holding `topologies/`, `docs/` and `rerank_rules.json`.
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Prebuilt topology index; built from the corpus when absent.
    pub topology_index: Option<PathBuf>,
    /// Prebuilt knowledge index; built from the documents when absent.
    pub knowledge_index: Option<PathBuf>,
    /// Scripted-backend fixture directory; templates answer when absent.
    pub fixtures: Option<PathBuf>,
    pub hash_dimension: usize,
    pub bo: BoConfig,
    pub http_llm: HttpConfig,
    pub http_embedder: HttpEmbedderConfig,
    pub spice: SpiceConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            tasks: (1..=TASK_COUNT).collect(),
            trials: 5,
            k: 1,
            max_iterations: 3,
            ablations: Ablations::default(),
            llm: LlmKind::Scripted,
            sim: SimKind::Mock,
            embedder: EmbedderKind::Hash,
            seed: 0,
            persist_memory: false,
            reselect_on_failure: false,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs"),
            topology_index: None,
            knowledge_index: None,
            fixtures: None,
            hash_dimension: 256,
            bo: BoConfig::default(),
            http_llm: HttpConfig::default(),
            http_embedder: HttpEmbedderConfig::default(),
            spice: SpiceConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
    }

    pub fn check(&self) -> Result<(), BenchError> {
        if self.tasks.is_empty() {
            return Err(BenchError::Config("no tasks selected".into()));
        }
        if let Some(t) = self.tasks.iter().find(|t| !(1..=TASK_COUNT).contains(*t)) {
            return Err(BenchError::Config(format!("task {t} is outside 1..={TASK_COUNT}")));
        }
        if self.tasks.iter().collect::<BTreeSet<_>>().len() != self.tasks.len() {
            return Err(BenchError::Config("tasks must be unique".into()));
        }
        if self.k < 1 || self.trials < self.k {
            return Err(BenchError::Config(format!("need trials >= k >= 1, got trials={} k={}", self.trials, self.k)));
        }
        if self.max_iterations < 1 {
            return Err(BenchError::Config("max_iterations must be at least 1".into()));
        }
        if self.hash_dimension == 0 {
            return Err(BenchError::Config("hash_dimension must be positive".into()));
        }
        Ok(())
    }
}
