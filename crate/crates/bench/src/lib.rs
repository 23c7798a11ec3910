//! Benchmark harness: the built-in tasks, trial execution, aggregation and
//! report output.

pub mod config;
pub mod report;
pub mod tasks;

use std::path::{Path, PathBuf};

use strata_core::agents::{AgentConfig, AgentError, Agents, TaskResult, Transcript};
use strata_core::llm::{HttpBackend, LlmBackend, ScriptedBackend};
use strata_core::memory::{MemoryError, MemoryStore};
use strata_core::retrieval::{
    build_topology_db, ingest_documents, Embedder, HashEmbedder, HttpEmbedder, KnowledgeStore, RerankRules,
    RetrievalError, TopologyDb,
};
use strata_core::simulation::{MockBackend, SimBackend, SpiceBackend};
use strata_core::spec::Specification;
use thiserror::Error;

pub use config::{Ablations, BenchmarkConfig, EmbedderKind, LlmKind, SimKind};
pub use report::{recompute, render_markdown, BenchmarkReport, TaskSummary, TrialRecord};
pub use tasks::{builtin_task, builtin_tasks, walkthrough_spec};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("report error: {0}")]
    Report(String),
}

/// Backends and indexes shared by every trial of a run.
pub struct Workbench {
    pub llm: Box<dyn LlmBackend>,
    pub sim: Box<dyn SimBackend>,
    pub embedder: Box<dyn Embedder>,
    pub topologies: TopologyDb,
    pub knowledge: Option<KnowledgeStore>,
    pub rules: RerankRules,
}

pub fn make_embedder(config: &BenchmarkConfig) -> Box<dyn Embedder> {
    match config.embedder {
        EmbedderKind::Hash => Box::new(HashEmbedder::new(config.hash_dimension)),
        EmbedderKind::Http => Box::new(HttpEmbedder::new(config.http_embedder.clone())),
    }
}

fn load_or_build_db(config: &BenchmarkConfig, embedder: &dyn Embedder) -> Result<TopologyDb, BenchError> {
    if let Some(path) = &config.topology_index {
        return Ok(TopologyDb::load(path)?);
    }
    let (db, rejected) = build_topology_db(&config.data_dir.join("topologies"), embedder)?;
    for r in rejected {
        log::warn!("topology {} rejected: {}", r.id, r.reason);
    }
    Ok(db)
}

fn load_or_build_kb(config: &BenchmarkConfig, embedder: &dyn Embedder) -> Result<Option<KnowledgeStore>, BenchError> {
    if config.ablations.disable_knowledge {
        return Ok(None);
    }
    if let Some(path) = &config.knowledge_index {
        return Ok(Some(KnowledgeStore::load(path)?));
    }
    let docs = config.data_dir.join("docs");
    if !docs.is_dir() {
        log::warn!("no knowledge documents at {}", docs.display());
        return Ok(None);
    }
    let (kb, errors) = ingest_documents(&docs, embedder)?;
    for e in errors {
        log::warn!("document {} skipped: {}", e.path.display(), e.reason);
    }
    Ok(Some(kb))
}

impl Workbench {
    pub fn new(config: &BenchmarkConfig) -> Result<Self, BenchError> {
        config.check()?;
        let llm: Box<dyn LlmBackend> = match config.llm {
            LlmKind::Scripted => match &config.fixtures {
                Some(dir) => Box::new(ScriptedBackend::from_dir(dir)?),
                None => Box::new(ScriptedBackend::new()),
            },
            LlmKind::Http => Box::new(HttpBackend::new(config.http_llm.clone())),
        };
        let sim: Box<dyn SimBackend> = match config.sim {
            SimKind::Mock => Box::new(MockBackend),
            SimKind::Spice => Box::new(SpiceBackend::new(config.spice.clone())),
        };
        let embedder = make_embedder(config);
        let topologies = load_or_build_db(config, embedder.as_ref())?;
        let knowledge = load_or_build_kb(config, embedder.as_ref())?;
        let rules_path = config.data_dir.join("rerank_rules.json");
        let rules = if rules_path.is_file() { RerankRules::load(&rules_path)? } else { RerankRules::default() };
        Ok(Self { llm, sim, embedder, topologies, knowledge, rules })
    }

    fn agent_config(config: &BenchmarkConfig, seed: u64) -> AgentConfig {
        AgentConfig {
            max_iterations: config.max_iterations,
            reselect_on_failure: config.reselect_on_failure,
            disable_knowledge: config.ablations.disable_knowledge,
            bo: config.bo.clone(),
            seed,
            ..AgentConfig::default()
        }
    }

    /// Run one task once, logging the transcript under `out_dir`.
    pub fn run_task(
        &self,
        config: &BenchmarkConfig,
        spec: &Specification,
        memory: &mut MemoryStore,
        trial: u32,
        seed: u64,
    ) -> Result<TaskResult, BenchError> {
        let dir = trial_dir(&config.out_dir, spec.task_id(), trial);
        let transcript = Transcript::create(self.llm.as_ref(), &dir.join("transcript.jsonl"))?;
        let agents = Agents {
            llm: &transcript,
            sim: self.sim.as_ref(),
            embedder: self.embedder.as_ref(),
            topologies: &self.topologies,
            knowledge: self.knowledge.as_ref(),
            rules: &self.rules,
            config: Self::agent_config(config, seed),
        };
        Ok(agents.run_task(spec, memory, trial)?)
    }
}

pub fn trial_dir(out: &Path, task_id: &str, trial: u32) -> PathBuf {
    out.join(task_id).join(trial.to_string())
}

fn trial_seed(base: u64, trial: u32, task: u32) -> u64 {
    base.wrapping_add(u64::from(trial) * 1_000).wrapping_add(u64::from(task))
}

/// Run every selected task for every trial and write `report.json` and
/// `report.md` to the output directory. Failed trials are recorded, never fatal.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport, BenchError> {
    let bench = Workbench::new(config)?;
    std::fs::create_dir_all(&config.out_dir)?;
    let specs: Vec<(u32, Specification)> = config
        .tasks
        .iter()
        .map(|&t| builtin_task(t).map(|s| (t, s)).ok_or_else(|| BenchError::Config(format!("unknown task {t}"))))
        .collect::<Result<_, _>>()?;
    let mut records: Vec<Vec<TrialRecord>> = vec![Vec::new(); specs.len()];
    let layers = |m: MemoryStore| m.with_layers(!config.ablations.disable_em, !config.ablations.disable_io);
    let mut shared = match config.persist_memory {
        true => Some(layers(MemoryStore::open(&config.out_dir.join("memory"))?)),
        false => None,
    };

    for trial in 0..config.trials {
        // insights carry across tasks within a trial; only a persisted store spans trials
        let mut fresh = layers(MemoryStore::in_memory());
        let memory = shared.as_mut().unwrap_or(&mut fresh);
        for (i, (task, spec)) in specs.iter().enumerate() {
            let seed = trial_seed(config.seed, trial, *task);
            let rec = match bench.run_task(config, spec, memory, trial, seed) {
                Ok(result) => {
                    let rel = PathBuf::from(spec.task_id()).join(trial.to_string()).join("result.json");
                    let text = serde_json::to_string_pretty(&result).map_err(|e| BenchError::Report(e.to_string()))?;
                    std::fs::write(config.out_dir.join(&rel), text)?;
                    log::info!(
                        "{} trial {trial}: {} in {} iteration(s)",
                        spec.task_id(),
                        if result.passed { "PASS" } else { "FAIL" },
                        result.iterations_used
                    );
                    report::trial_record(trial, &result, Some(rel.to_string_lossy().into_owned()))
                }
                Err(e) => {
                    log::error!("{} trial {trial} failed: {e}", spec.task_id());
                    TrialRecord { error: Some(e.to_string()), ..report::failed_trial(trial) }
                }
            };
            records[i].push(rec);
        }
    }

    let mut tasks = Vec::with_capacity(specs.len());
    for ((task, spec), trials) in specs.iter().zip(records) {
        tasks.push(report::summarize_task(*task, spec.task_id(), spec.level(), config.k, trials)?);
    }
    let overall = report::overall(&tasks);
    let report = BenchmarkReport { config: config.clone(), tasks, overall };
    report.save(&config.out_dir)?;
    Ok(report)
}

/// Build the topology index from the corpus and save it.
pub fn build_db(config: &BenchmarkConfig, corpus: &Path, out: &Path) -> Result<TopologyDb, BenchError> {
    let embedder = make_embedder(config);
    let (db, rejected) = build_topology_db(corpus, embedder.as_ref())?;
    for r in &rejected {
        log::warn!("topology {} rejected: {}", r.id, r.reason);
    }
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    db.save(out)?;
    Ok(db)
}

/// Build the knowledge index from a document directory and save it.
pub fn build_kb(config: &BenchmarkConfig, docs: &Path, out: &Path) -> Result<KnowledgeStore, BenchError> {
    let embedder = make_embedder(config);
    let (kb, errors) = ingest_documents(docs, embedder.as_ref())?;
    for e in &errors {
        log::warn!("document {} skipped: {}", e.path.display(), e.reason);
    }
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    kb.save(out)?;
    Ok(kb)
}

/// Run the walk-through specification against a fixture directory.
pub fn replay(config: &BenchmarkConfig, fixtures: &Path) -> Result<TaskResult, BenchError> {
    let config = BenchmarkConfig {
        llm: LlmKind::Scripted,
        fixtures: Some(fixtures.to_path_buf()),
        bo: strata_core::optimizer::BoConfig::default(),
        ..config.clone()
    };
    let bench = Workbench::new(&config)?;
    let mut memory = MemoryStore::in_memory();
    bench.run_task(&config, &walkthrough_spec(), &mut memory, 0, config.seed)
}
