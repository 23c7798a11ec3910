//! Stage agents and the closed-loop task orchestrator.
//!
//! Each task runs select → refine → size → optimize for up to
//! `max_iterations` rounds. A failed round leaves a reflection and a fused
//! summary in memory; the next round's prompts read them back from there.

mod prompt;
mod transcript;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::llm::{extract_json, LlmBackend, LlmError, Stage};
use crate::memory::{fuse_context, IterationTrace, MemoryError, MemoryStore, MIN_BUDGET};
use crate::metrics::{normalized_search_space, spec_satisfied};
use crate::netlist::{self, apply_edit, parse_value, EditOp, Netlist};
use crate::optimizer::{figure_of_merit, optimize, BoConfig, BoTrace, FigureOfMerit, OptimizeError};
use crate::retrieval::{
    condense_description, rerank, retrieve_knowledge, Embedder, KnowledgeStore, RerankRules, RetrievalError,
    TopologyDb, TopologyEntry,
};
use crate::simulation::{run_testbench, SimBackend, SimError, TestbenchSuite};
use crate::spec::{Assignment, ParamBound, ParameterSpace, PerformanceReport, Scale, SimStatus, SpecError, Specification};

pub use prompt::{captured_sections, CandidateSummary, StagePrompt, SECTION_ORDER};
pub use transcript::Transcript;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("topology database is empty")]
    EmptyDb,
    #[error("netlist has no parameters to size")]
    NoSymbols,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input netlist is invalid: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Process limits that bound every proposed range, by symbol class.
/// The class is the first letter of the symbol name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TechLimits {
    pub width: (f64, f64),
    pub length: (f64, f64),
    pub capacitance: (f64, f64),
    pub current: (f64, f64),
    pub resistance: (f64, f64),
    /// Anything else, e.g. bias voltages.
    pub other: (f64, f64),
}

impl Default for TechLimits {
    fn default() -> Self {
        Self {
            width: (0.42e-6, 100e-6),
            length: (0.15e-6, 8e-6),
            capacitance: (0.1e-12, 20e-12),
            current: (0.1e-6, 1e-3),
            resistance: (10.0, 1e6),
            other: (1e-3, 1.8),
        }
    }
}

impl TechLimits {
    pub fn bound(&self, symbol: &str) -> ParamBound {
        let ((lo, hi), unit) = match symbol.chars().next() {
            Some('w') => (self.width, "m"),
            Some('l') => (self.length, "m"),
            Some('c') => (self.capacitance, "F"),
            Some('i') => (self.current, "A"),
            Some('r') => (self.resistance, "Ohm"),
            _ => (self.other, ""),
        };
        ParamBound::new(symbol, lo, hi, Scale::Log, unit)
    }

    pub fn full_space<'s>(&self, symbols: impl IntoIterator<Item = &'s str>) -> Result<ParameterSpace, SpecError> {
        ParameterSpace::new(symbols.into_iter().map(|s| self.bound(s)).collect())
    }

    fn check(&self) -> Result<(), AgentError> {
        for (name, (lo, hi)) in [
            ("width", self.width),
            ("length", self.length),
            ("capacitance", self.capacitance),
            ("current", self.current),
            ("resistance", self.resistance),
            ("other", self.other),
        ] {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(AgentError::Config(format!("{name} limits [{lo}, {hi}] must be positive and increasing")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub max_iterations: u32,
    /// Run topology selection again after a failed iteration instead of
    /// refining the current topology.
    pub reselect_on_failure: bool,
    pub disable_knowledge: bool,
    pub insight_k: usize,
    pub candidate_k: usize,
    pub knowledge_k: usize,
    /// Character budget of a fused iteration summary.
    pub char_budget: usize,
    pub knowledge_budget: usize,
    /// `n_initial` is raised to twice the space dimension when smaller.
    pub bo: BoConfig,
    /// Analyses are narrowed to the task's metrics; electrical settings are kept.
    pub suite: TestbenchSuite,
    pub limits: TechLimits,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3,
            reselect_on_failure: false,
            disable_knowledge: false,
            insight_k: 3,
            candidate_k: 5,
            knowledge_k: 3,
            char_budget: crate::memory::DEFAULT_BUDGET,
            knowledge_budget: 1200,
            bo: BoConfig::default(),
            suite: TestbenchSuite::default(),
            limits: TechLimits::default(),
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn check(&self) -> Result<(), AgentError> {
        if self.max_iterations == 0 {
            return Err(AgentError::Config("max_iterations must be at least 1".into()));
        }
        if self.candidate_k == 0 {
            return Err(AgentError::Config("candidate_k must be at least 1".into()));
        }
        if self.char_budget < MIN_BUDGET {
            return Err(AgentError::Config(format!("char_budget must be at least {MIN_BUDGET}")));
        }
        if self.bo.n_iterations == 0 {
            return Err(AgentError::Config("bo.n_iterations must be at least 1".into()));
        }
        self.suite.check()?;
        self.limits.check()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub entry: TopologyEntry,
    /// The architecture description the backend produced.
    pub rationale: String,
    pub candidates: Vec<CandidateSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub netlist: Netlist,
    /// Edits that were applied; empty on pass-through.
    pub edits: Vec<EditOp>,
    /// Why proposed edits were discarded, if they were.
    pub rejected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub space: ParameterSpace,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub topology_id: Option<String>,
    pub edits: Vec<EditOp>,
    pub rejected_edits: Option<String>,
    pub space: Option<ParameterSpace>,
    pub space_warnings: Vec<String>,
    pub normalized_search_space: Option<f64>,
    pub best_assignment: Option<Assignment>,
    pub fom: Option<FigureOfMerit>,
    pub report: PerformanceReport,
    pub passed: bool,
    /// Set when a subsystem failure ended the iteration early.
    pub error: Option<String>,
}

impl IterationRecord {
    fn new(iteration: u32) -> Self {
        Self {
            iteration,
            topology_id: None,
            edits: vec![],
            rejected_edits: None,
            space: None,
            space_warnings: vec![],
            normalized_search_space: None,
            best_assignment: None,
            fom: None,
            report: PerformanceReport::failed(SimStatus::SimFailed),
            passed: false,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub spec: Specification,
    pub passed: bool,
    pub iterations_used: u32,
    pub topology_id: Option<String>,
    /// Serialized netlist of the last iteration, placeholders unbound.
    pub final_netlist: Option<String>,
    pub final_assignment: Option<Assignment>,
    pub iterations: Vec<IterationRecord>,
    /// Optimizer trace of each iteration; `None` when it never ran.
    pub traces: Vec<Option<BoTrace>>,
}

impl TaskResult {
    /// Normalized search space of the last iteration that proposed one.
    pub fn normalized_search_space(&self) -> Option<f64> {
        self.iterations.iter().rev().find_map(|i| i.normalized_search_space)
    }
}

const SELECT_SYSTEM: &str = "You are an analog design agent. Describe the op-amp architecture best suited to the \
    targets in two sentences: the architecture style, then the stage structure. Reply as JSON {\"description\": ...}.";
const REFINE_SYSTEM: &str = "You refine an op-amp netlist with localized structural edits such as bias or \
    compensation changes. Reply as JSON {\"edits\": [...]} using add-device, remove-device, reconnect-terminal or \
    set-param actions; reply {\"edits\": []} when no change is needed.";
const SIZE_SYSTEM: &str = "You propose sizing ranges for every parameter of an op-amp netlist. Reply as JSON \
    {\"bounds\": {\"<symbol>\": [lower, upper]}} in SI units.";

/// The agents and the subsystems they share.
pub struct Agents<'a> {
    pub llm: &'a dyn LlmBackend,
    pub sim: &'a dyn SimBackend,
    pub embedder: &'a dyn Embedder,
    pub topologies: &'a TopologyDb,
    pub knowledge: Option<&'a KnowledgeStore>,
    pub rules: &'a RerankRules,
    pub config: AgentConfig,
}

struct Context<'m> {
    memory: &'m MemoryStore,
    key: &'m str,
    knowledge: Option<&'m str>,
}

impl<'a> Agents<'a> {
    fn stage_prompt(&self, stage: Stage, iteration: u32, spec: &Specification, ctx: &Context) -> StagePrompt {
        let mut p = StagePrompt::new(stage, iteration, spec);
        p.insights = ctx.memory.retrieve_insights(spec, self.config.insight_k);
        p.reflections = ctx.memory.retrieve_reflections(ctx.key);
        p.reflections.retain(|r| r.iteration < iteration);
        p.fused = ctx.memory.latest_fused(ctx.key).filter(|f| f.iteration < iteration);
        p.knowledge = ctx.knowledge.map(str::to_string);
        p
    }

    /// Knowledge paragraph for a task. The query depends only on the
    /// targets, so it carries nothing from earlier iterations.
    pub fn task_knowledge(&self, spec: &Specification) -> Option<String> {
        if self.config.disable_knowledge {
            return None;
        }
        let store = self.knowledge?;
        let targets: Vec<String> = spec.targets().map(ToString::to_string).collect();
        let query = format!("Op-amp design guidance for phase margin, gain and bandwidth with {}", targets.join(", "));
        match retrieve_knowledge(store, self.embedder, &query, self.llm, self.config.knowledge_k, self.config.knowledge_budget)
        {
            Ok(k) => {
                if let Some(w) = &k.warning {
                    log::warn!("knowledge retrieval: {w}");
                }
                Some(k.summary).filter(|s| !s.trim().is_empty())
            }
            Err(e) => {
                log::warn!("knowledge retrieval failed: {e}");
                None
            }
        }
    }

    /// Ask for an architecture description and return the best-matching
    /// database entry. The result is always a stored topology.
    pub fn select_topology(
        &self,
        spec: &Specification,
        iteration: u32,
        memory: &MemoryStore,
        key: &str,
        knowledge: Option<&str>,
    ) -> Result<Selection, AgentError> {
        if self.topologies.is_empty() {
            return Err(AgentError::EmptyDb);
        }
        let ctx = Context { memory, key, knowledge };
        let prompt = self.stage_prompt(Stage::Select, iteration, spec, &ctx).render(
            spec.task_id(),
            SELECT_SYSTEM,
            "Describe the target architecture.",
            json!({}),
        );
        let raw = self.llm.complete(&prompt)?;
        let description = match extract_json(&raw) {
            Ok(v) => v["description"].as_str().map(str::to_string),
            Err(_) => None,
        }
        .unwrap_or_else(|| raw.trim().to_string());
        let condensed = condense_description(&description, self.llm)?;
        let found = self.topologies.query(self.embedder, &condensed, self.config.candidate_k)?;
        let ranked = rerank(found, &self.rules.constraints(&condensed));
        let candidates = ranked
            .iter()
            .map(|c| CandidateSummary {
                id: c.entry.id.clone(),
                similarity: c.similarity,
                description: c.entry.description.clone(),
            })
            .collect();
        let entry = ranked.into_iter().next().ok_or(AgentError::EmptyDb)?.entry;
        log::info!("{}: selected {} for \"{condensed}\"", spec.task_id(), entry.id);
        Ok(Selection { entry, rationale: condensed, candidates })
    }

    /// Apply the backend's structural edits. Anything malformed or any edit
    /// that leaves the netlist invalid discards the whole batch.
    #[allow(clippy::too_many_arguments)]
    pub fn refine_topology(
        &self,
        netlist: &Netlist,
        spec: &Specification,
        iteration: u32,
        memory: &MemoryStore,
        key: &str,
        knowledge: Option<&str>,
        candidates: &[CandidateSummary],
    ) -> Result<Refinement, AgentError> {
        let issues = netlist::validate(netlist);
        if !issues.is_empty() {
            let text: Vec<String> = issues.iter().map(ToString::to_string).collect();
            return Err(AgentError::InvalidInput(text.join("; ")));
        }
        let ctx = Context { memory, key, knowledge };
        let mut sp = self.stage_prompt(Stage::Refine, iteration, spec, &ctx);
        sp.candidates = candidates.to_vec();
        let text = netlist.serialize();
        let prompt = sp.render(
            spec.task_id(),
            REFINE_SYSTEM,
            &format!("Current netlist:\n{text}"),
            json!({ "netlist": text }),
        );
        let pass = |reason: String| {
            log::warn!("{}: refinement rejected: {reason}", spec.task_id());
            Ok(Refinement { netlist: netlist.clone(), edits: vec![], rejected: Some(reason) })
        };
        let raw = match self.llm.complete(&prompt) {
            Ok(r) => r,
            Err(e) => return pass(format!("backend error: {e}")),
        };
        let edits: Vec<EditOp> = match extract_json(&raw).map(|v| v.get("edits").cloned()) {
            Ok(Some(v)) => match serde_json::from_value(v) {
                Ok(e) => e,
                Err(e) => return pass(format!("malformed edits: {e}")),
            },
            Ok(None) => return pass("response has no `edits` field".into()),
            Err(e) => return pass(e.to_string()),
        };
        let mut out = netlist.clone();
        for op in &edits {
            out = match apply_edit(&out, op) {
                Ok(n) => n,
                Err(e) => return pass(format!("edit failed: {e}")),
            };
        }
        let issues = netlist::validate(&out);
        if !issues.is_empty() {
            let text: Vec<String> = issues.iter().map(ToString::to_string).collect();
            return pass(format!("edited netlist is invalid: {}", text.join("; ")));
        }
        if out.cell != netlist.cell || out.ports != netlist.ports {
            return pass("edits changed the cell interface".into());
        }
        if out.symbols().is_empty() {
            return pass("edits removed every sizing parameter".into());
        }
        Ok(Refinement { netlist: out, edits, rejected: None })
    }

    /// One range per netlist symbol, clipped into the technology limits.
    pub fn propose_parameter_space(
        &self,
        netlist: &Netlist,
        spec: &Specification,
        iteration: u32,
        memory: &MemoryStore,
        key: &str,
        knowledge: Option<&str>,
    ) -> Result<Proposal, AgentError> {
        let symbols: Vec<String> = netlist.symbols().into_iter().collect();
        if symbols.is_empty() {
            return Err(AgentError::NoSymbols);
        }
        let ctx = Context { memory, key, knowledge };
        let text = netlist.serialize();
        let limits: serde_json::Map<String, Json> = symbols
            .iter()
            .map(|s| {
                let b = self.config.limits.bound(s);
                (s.clone(), json!([b.lower, b.upper]))
            })
            .collect();
        let prompt = self.stage_prompt(Stage::Size, iteration, spec, &ctx).render(
            spec.task_id(),
            SIZE_SYSTEM,
            &format!("Netlist:\n{text}\nSymbols: {}\nSupply: {} V", symbols.join(", "), self.config.suite.supply),
            json!({ "netlist": text, "symbols": symbols, "supply": self.config.suite.supply, "limits": limits }),
        );
        let raw = self.llm.complete(&prompt)?;
        let bounds = match extract_json(&raw) {
            Ok(v) => v["bounds"].as_object().cloned().unwrap_or_default(),
            Err(e) => {
                log::warn!("{}: sizing response unusable: {e}", spec.task_id());
                Default::default()
            }
        };
        let mut warnings = Vec::new();
        let mut params = Vec::with_capacity(symbols.len());
        for s in &symbols {
            let full = self.config.limits.bound(s);
            let proposed = bounds.get(s).and_then(|b| {
                let pair = b.as_array().filter(|a| a.len() == 2)?;
                Some((number(&pair[0])?, number(&pair[1])?))
            });
            let Some((lo, hi)) = proposed else {
                warnings.push(format!("{s}: no usable range proposed, using the full range"));
                params.push(full);
                continue;
            };
            let (clo, chi) = (lo.clamp(full.lower, full.upper), hi.clamp(full.lower, full.upper));
            if !(chi > clo) {
                warnings.push(format!("{s}: range [{lo}, {hi}] is empty within limits, using the full range"));
                params.push(full);
                continue;
            }
            if clo != lo || chi != hi {
                warnings.push(format!("{s}: range [{lo}, {hi}] clipped to [{clo}, {chi}]"));
            }
            params.push(ParamBound::new(s.clone(), clo, chi, full.scale, full.unit.clone()));
        }
        for w in &warnings {
            log::warn!("{}: {w}", spec.task_id());
        }
        Ok(Proposal { space: ParameterSpace::new(params)?, warnings })
    }

    /// Run the closed design loop on one task. `trial` separates the memory
    /// of repeated runs of the same task.
    pub fn run_task(&self, spec: &Specification, memory: &mut MemoryStore, trial: u32) -> Result<TaskResult, AgentError> {
        self.config.check()?;
        if self.topologies.is_empty() {
            return Err(AgentError::EmptyDb);
        }
        let suite = TestbenchSuite { analyses: TestbenchSuite::for_spec(spec).analyses, ..self.config.suite.clone() };
        suite.check()?;
        let key = format!("{}/{}", spec.task_id(), trial);
        let knowledge = self.task_knowledge(spec);
        let mut result = TaskResult {
            spec: spec.clone(),
            passed: false,
            iterations_used: 0,
            topology_id: None,
            final_netlist: None,
            final_assignment: None,
            iterations: vec![],
            traces: vec![],
        };
        let mut current: Option<(String, Netlist)> = None;
        let mut candidates: Vec<CandidateSummary> = vec![];

        for iteration in 1..=self.config.max_iterations {
            let mut rec = IterationRecord::new(iteration);
            let mut trace = None;
            let run = self.iterate(
                spec,
                &suite,
                iteration,
                memory,
                &key,
                knowledge.as_deref(),
                &mut current,
                &mut candidates,
                &mut rec,
                &mut trace,
            );
            if let Err(e) = run {
                log::warn!("{key}: iteration {iteration} failed: {e}");
                rec.error = Some(e.to_string());
            }
            let topology = current.as_ref().map(|(id, _)| id.clone());
            rec.topology_id = topology.clone();
            rec.passed = spec_satisfied(&rec.report, spec).map(|c| c.pass).unwrap_or(false);
            result.iterations_used = iteration;
            result.topology_id = topology.clone();
            result.final_netlist = current.as_ref().map(|(_, n)| n.serialize());
            result.final_assignment = rec.best_assignment.clone();
            result.passed = rec.passed;

            if rec.passed {
                let summary = insight_summary(topology.as_deref().unwrap_or("unknown"), &rec, spec);
                if let Err(e) = memory.record_insight(spec, topology.as_deref().unwrap_or("unknown"), &summary, &rec.report) {
                    log::warn!("{key}: insight not recorded: {e}");
                }
            } else {
                let trace_text = iteration_text(&rec);
                let it = IterationTrace {
                    task_id: key.clone(),
                    iteration,
                    text: trace_text,
                    report: rec.report.clone(),
                    spec: spec.clone(),
                };
                match fuse_context(&it, self.config.char_budget, self.llm).and_then(|f| memory.record_fused(f)) {
                    Ok(_) => {}
                    Err(e) => log::warn!("{key}: fused context not recorded: {e}"),
                }
                if let Err(e) = memory.record_reflection(&key, iteration, &rec.report, spec, self.llm) {
                    log::warn!("{key}: reflection not recorded: {e}");
                }
            }
            let passed = rec.passed;
            result.iterations.push(rec);
            result.traces.push(trace);
            if passed {
                break;
            }
        }
        Ok(result)
    }

    #[allow(clippy::too_many_arguments)]
    fn iterate(
        &self,
        spec: &Specification,
        suite: &TestbenchSuite,
        iteration: u32,
        memory: &MemoryStore,
        key: &str,
        knowledge: Option<&str>,
        current: &mut Option<(String, Netlist)>,
        candidates: &mut Vec<CandidateSummary>,
        rec: &mut IterationRecord,
        trace_out: &mut Option<BoTrace>,
    ) -> Result<(), AgentError> {
        if current.is_none() || self.config.reselect_on_failure {
            let sel = self.select_topology(spec, iteration, memory, key, knowledge)?;
            *candidates = sel.candidates;
            *current = Some((sel.entry.id, sel.entry.netlist));
        }
        let (id, netlist) = current.clone().expect("topology chosen above");
        let refined = self.refine_topology(&netlist, spec, iteration, memory, key, knowledge, candidates)?;
        rec.edits = refined.edits;
        rec.rejected_edits = refined.rejected;
        *current = Some((id, refined.netlist.clone()));
        let netlist = refined.netlist;

        let proposal = self.propose_parameter_space(&netlist, spec, iteration, memory, key, knowledge)?;
        let full = self.config.limits.full_space(proposal.space.names())?;
        rec.normalized_search_space = normalized_search_space(&proposal.space, &full).ok();
        rec.space_warnings = proposal.warnings;
        rec.space = Some(proposal.space.clone());

        let bo = BoConfig {
            n_initial: self.config.bo.n_initial.max(2 * proposal.space.dim()),
            seed: self.config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ u64::from(iteration),
            ..self.config.bo.clone()
        };
        let objective = |a: &Assignment| {
            let report = match netlist.bind(a) {
                Ok(bound) => run_testbench(self.sim, &bound, suite),
                Err(e) => Err(SimError::Unbound(vec![e.to_string()])),
            };
            match report {
                Ok(r) => match figure_of_merit(&r, spec) {
                    Ok(f) => (f, Some(r)),
                    Err(_) => (FigureOfMerit::failed(), Some(r)),
                },
                Err(e) => {
                    log::debug!("{key}: evaluation failed: {e}");
                    (FigureOfMerit::failed(), None)
                }
            }
        };
        let trace = optimize(&proposal.space, objective, &bo)?;
        let best = trace.best().ok_or(OptimizeError::EmptyTrace)?;
        rec.best_assignment = Some(best.assignment.clone());
        rec.fom = Some(best.fom);
        rec.report = best.report.clone().unwrap_or_else(|| PerformanceReport::failed(SimStatus::SimFailed));
        *trace_out = Some(trace);
        Ok(())
    }
}

/// A bound given as a JSON number or a SPICE-style string such as `"10u"`.
fn number(v: &Json) -> Option<f64> {
    let x = match v {
        Json::Number(n) => n.as_f64()?,
        Json::String(s) => parse_value(s.trim()).ok()?.as_num()?,
        _ => return None,
    };
    x.is_finite().then_some(x)
}

fn insight_summary(topology: &str, rec: &IterationRecord, spec: &Specification) -> String {
    let mut s = format!(
        "Topology {topology} met every target at iteration {} after {} structural edit(s).",
        rec.iteration,
        rec.edits.len()
    );
    if let Some((m, v)) = spec_satisfied(&rec.report, spec).ok().and_then(|c| c.worst()) {
        s.push_str(&format!(" Tightest margin: {} at {v:.3}.", m.label()));
    }
    if let Some(space) = &rec.space {
        let ranges: Vec<String> =
            space.params().iter().map(|p| format!("{} [{:.3e}, {:.3e}]", p.name, p.lower, p.upper)).collect();
        s.push_str(&format!(" Ranges: {}.", ranges.join(", ")));
    }
    s
}

fn iteration_text(rec: &IterationRecord) -> String {
    let mut lines = vec![format!(
        "Iteration {} on topology {}.",
        rec.iteration,
        rec.topology_id.as_deref().unwrap_or("none")
    )];
    if let Some(e) = &rec.error {
        lines.push(format!("Error: {e}"));
    }
    if rec.edits.is_empty() {
        lines.push("No structural edits.".into());
    } else {
        lines.push(format!("Edits: {}", serde_json::to_string(&rec.edits).unwrap_or_default()));
    }
    if let Some(r) = &rec.rejected_edits {
        lines.push(format!("Rejected edits: {r}"));
    }
    if let Some(space) = &rec.space {
        for p in space.params() {
            lines.push(format!("Range {} [{:.4e}, {:.4e}]", p.name, p.lower, p.upper));
        }
    }
    if let Some(a) = &rec.best_assignment {
        let vals: Vec<String> = a.iter().map(|(k, v)| format!("{k}={v:.4e}")).collect();
        lines.push(format!("Best point: {}", vals.join(" ")));
    }
    if let Some(f) = &rec.fom {
        let worst = f.worst_metric.map(|m| m.label().to_string()).unwrap_or_else(|| "none".into());
        lines.push(format!("Best figure of merit {:.4} (worst metric {worst}).", f.value));
    }
    lines.push(format!("Simulation status {:?}.", rec.report.status));
    lines.join("\n")
}

#[cfg(test)]
mod tests;
