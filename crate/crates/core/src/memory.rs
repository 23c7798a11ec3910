//! Layered design memory.
//!
//! * insights: cross-task summaries of passing designs, keyed by specification
//! * reflections: within-task failure analyses with a corrective action
//! * fused contexts: budgeted summaries of iteration transcripts
//!
//! Each layer is an append-only JSON-lines log replayed on open.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{extract_json, LlmBackend, LlmError, Prompt, Stage};
use crate::metrics::spec_satisfied;
use crate::retrieval::text::truncate_chars;
use crate::spec::{Direction, Metric, PerformanceReport, SimStatus, Specification};

pub const MIN_BUDGET: usize = 256;
pub const DEFAULT_BUDGET: usize = 4000;

const INSIGHTS: &str = "insights.jsonl";
const REFLECTIONS: &str = "reflections.jsonl";
const FUSED: &str = "fused.jsonl";

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{file}:{line}: {reason}")]
    Corrupt { file: String, line: usize, reason: String },
    #[error("insights are only recorded for passing designs")]
    NotPassing,
    #[error("reflections are only recorded for failing iterations")]
    NotFailing,
    #[error("summary must not be empty")]
    EmptySummary,
    #[error("iteration numbers start at 1")]
    BadIteration,
    #[error("budget {0} is below the minimum of {MIN_BUDGET} characters")]
    BudgetTooSmall(usize),
    #[error("language model error: {0}")]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightRecord {
    pub id: String,
    pub spec: Specification,
    pub topology_id: String,
    pub summary: String,
    pub performance: PerformanceReport,
    /// Logical write counter shared by all layers of a store.
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionRecord {
    pub task_id: String,
    pub iteration: u32,
    pub status: SimStatus,
    pub failure_cause: String,
    pub corrective_action: String,
    pub failed_metrics: Vec<Metric>,
    pub worst_metric: Option<Metric>,
    pub created_at: u64,
}

/// A metric value next to its requirement. `value` is absent when the
/// simulation produced no number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub metric: Metric,
    pub value: Option<f64>,
    pub target: f64,
    pub direction: Direction,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        let t = crate::spec::SpecTarget { metric: self.metric, direction: self.direction, threshold: self.target };
        self.value.is_some_and(|v| t.holds(v))
    }

    pub fn margin(&self) -> Option<f64> {
        let t = crate::spec::SpecTarget { metric: self.metric, direction: self.direction, threshold: self.target };
        self.value.map(|v| t.margin(v))
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let dir = match self.direction {
            Direction::AtLeast => ">=",
            Direction::AtMost => "<=",
        };
        match self.value {
            Some(v) => write!(f, "{} = {v} (target {dir} {})", self.metric, self.target),
            None => write!(f, "{} = n/a (target {dir} {})", self.metric, self.target),
        }
    }
}

/// One (metric, value, target) triple per specification target.
pub fn outcomes(report: &PerformanceReport, spec: &Specification) -> Vec<Outcome> {
    spec.targets()
        .map(|t| Outcome {
            metric: t.metric,
            value: if report.is_ok() { report.get(t.metric) } else { None },
            target: t.threshold,
            direction: t.direction,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedContext {
    pub task_id: String,
    pub iteration: u32,
    pub summary: String,
    pub preserved_outcomes: Vec<Outcome>,
    pub char_budget: usize,
    pub created_at: u64,
}

/// Raw material for [`fuse_context`]: the transcript of one iteration and
/// the report it ended with.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub task_id: String,
    pub iteration: u32,
    pub text: String,
    pub report: PerformanceReport,
    pub spec: Specification,
}

/// Specification as a direction-signed vector over all metrics.
pub fn spec_vector(spec: &Specification) -> [f64; 7] {
    let mut v = [0.0; 7];
    for (i, m) in Metric::ALL.iter().enumerate() {
        if let Some(t) = spec.target(*m) {
            let x = t.threshold;
            let scaled = match m {
                Metric::Gain | Metric::Cmrr | Metric::Psrr | Metric::Psrn => x / 100.0,
                Metric::Pm => x / 90.0,
                Metric::Gbw => x.max(1.0).log10() / 9.0,
                Metric::Power => (1.0 + x.max(0.0)).log10() / 4.0,
            };
            let sign = match t.direction {
                Direction::AtLeast => 1.0,
                Direction::AtMost => -1.0,
            };
            v[i] = sign * scaled;
        }
    }
    v
}

pub fn spec_similarity(a: &Specification, b: &Specification) -> f64 {
    crate::retrieval::cosine(&spec_vector(a), &spec_vector(b))
}

/// The three memory layers with their persistence and ablation switches.
#[derive(Debug)]
pub struct MemoryStore {
    dir: Option<PathBuf>,
    insights: Vec<InsightRecord>,
    reflections: Vec<ReflectionRecord>,
    fused: Vec<FusedContext>,
    clock: u64,
    em_enabled: bool,
    io_enabled: bool,
}

fn replay<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, MemoryError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| MemoryError::Corrupt {
            file: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

impl MemoryStore {
    /// A store that never touches disk.
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            insights: Vec::new(),
            reflections: Vec::new(),
            fused: Vec::new(),
            clock: 0,
            em_enabled: true,
            io_enabled: true,
        }
    }

    /// Open (or create) a store under `dir`, replaying existing logs.
    pub fn open(dir: &Path) -> Result<Self, MemoryError> {
        std::fs::create_dir_all(dir)?;
        let insights: Vec<InsightRecord> = replay(&dir.join(INSIGHTS))?;
        let reflections: Vec<ReflectionRecord> = replay(&dir.join(REFLECTIONS))?;
        let fused: Vec<FusedContext> = replay(&dir.join(FUSED))?;
        let clock = insights
            .iter()
            .map(|r| r.created_at)
            .chain(reflections.iter().map(|r| r.created_at))
            .chain(fused.iter().map(|r| r.created_at))
            .max()
            .map_or(0, |m| m + 1);
        Ok(Self { dir: Some(dir.to_path_buf()), insights, reflections, fused, clock, em_enabled: true, io_enabled: true })
    }

    /// Switch the cross-task insight layer and the within-task failure layers.
    pub fn with_layers(mut self, evolution: bool, introspection: bool) -> Self {
        self.em_enabled = evolution;
        self.io_enabled = introspection;
        self
    }

    pub fn em_enabled(&self) -> bool {
        self.em_enabled
    }

    pub fn io_enabled(&self) -> bool {
        self.io_enabled
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn tick(&mut self) -> u64 {
        let t = self.clock;
        self.clock += 1;
        t
    }

    fn append<T: Serialize>(&self, file: &str, record: &T) -> Result<(), MemoryError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let mut line = serde_json::to_string(record).map_err(|e| MemoryError::Corrupt {
            file: file.to_string(),
            line: 0,
            reason: e.to_string(),
        })?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(dir.join(file))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    pub fn record_insight(
        &mut self,
        spec: &Specification,
        topology_id: &str,
        summary: &str,
        report: &PerformanceReport,
    ) -> Result<InsightRecord, MemoryError> {
        let passed = spec_satisfied(report, spec).map(|c| c.pass).unwrap_or(false);
        if !passed {
            return Err(MemoryError::NotPassing);
        }
        if summary.trim().is_empty() {
            return Err(MemoryError::EmptySummary);
        }
        let created_at = self.tick();
        let record = InsightRecord {
            id: format!("insight-{created_at}"),
            spec: spec.clone(),
            topology_id: topology_id.to_string(),
            summary: summary.trim().to_string(),
            performance: report.clone(),
            created_at,
        };
        self.append(INSIGHTS, &record)?;
        self.insights.push(record.clone());
        Ok(record)
    }

    /// Top-k insights by specification similarity, newest first among ties.
    /// Empty when the insight layer is disabled.
    pub fn retrieve_insights(&self, spec: &Specification, k: usize) -> Vec<InsightRecord> {
        if !self.em_enabled || k == 0 {
            return Vec::new();
        }
        let mut scored: Vec<(f64, &InsightRecord)> =
            self.insights.iter().map(|r| (spec_similarity(spec, &r.spec), r)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.created_at.cmp(&a.1.created_at)));
        scored.into_iter().take(k).map(|(_, r)| r.clone()).collect()
    }

    pub fn insight_count(&self) -> usize {
        self.insights.len()
    }

    /// Analyze a failed iteration and store the reflection.
    pub fn record_reflection(
        &mut self,
        task_id: &str,
        iteration: u32,
        report: &PerformanceReport,
        spec: &Specification,
        llm: &dyn LlmBackend,
    ) -> Result<ReflectionRecord, MemoryError> {
        if iteration == 0 {
            return Err(MemoryError::BadIteration);
        }
        let (failed, worst) = match spec_satisfied(report, spec) {
            Ok(check) if check.pass => return Err(MemoryError::NotFailing),
            Ok(check) => (check.failed_metrics(), check.worst().map(|(m, _)| m)),
            Err(_) if report.is_ok() => {
                // missing metrics count as failures
                let missing: Vec<Metric> = spec.metrics().filter(|m| report.get(*m).is_none()).collect();
                let first = missing.first().copied();
                (missing, first)
            }
            Err(_) => (Vec::new(), None),
        };
        let outs = outcomes(report, spec);
        let payload = serde_json::json!({
            "status": report.status,
            "outcomes": outs,
            "failed_metrics": failed,
            "worst_metric": worst,
        });
        let listing: String = outs.iter().map(|o| format!("- {o}\n")).collect();
        let prompt = Prompt::new(Stage::Reflect)
            .iteration(iteration)
            .task(task_id)
            .system("Explain why the design failed and give one concrete corrective action. Reply as JSON {\"failure_cause\": ..., \"corrective_action\": ...}.")
            .user(format!("Simulation status: {:?}\nResults:\n{listing}", report.status))
            .payload(payload);
        let raw = llm.complete(&prompt)?;
        let parsed = extract_json(&raw).ok();
        let field = |k: &str| {
            parsed
                .as_ref()
                .and_then(|v| v[k].as_str())
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
        };
        let failure_cause = field("failure_cause").unwrap_or_else(|| match worst {
            Some(m) => format!("{m} missed its target."),
            None => format!("Simulation ended with status {:?}.", report.status),
        });
        let corrective_action = field("corrective_action").unwrap_or_else(|| {
            log::warn!("reflection response lacked a corrective action; using a generic one");
            match worst {
                Some(m) => format!("Adjust the design to raise the {m} margin."),
                None => "Re-center the bias point so the circuit simulates.".to_string(),
            }
        });
        let record = ReflectionRecord {
            task_id: task_id.to_string(),
            iteration,
            status: report.status,
            failure_cause,
            corrective_action,
            failed_metrics: failed,
            worst_metric: worst,
            created_at: self.tick(),
        };
        self.append(REFLECTIONS, &record)?;
        self.reflections.push(record.clone());
        Ok(record)
    }

    /// Reflections of one task in iteration order. Empty when the
    /// introspection layer is disabled.
    pub fn retrieve_reflections(&self, task_id: &str) -> Vec<ReflectionRecord> {
        if !self.io_enabled {
            return Vec::new();
        }
        let mut out: Vec<ReflectionRecord> = self.reflections.iter().filter(|r| r.task_id == task_id).cloned().collect();
        out.sort_by_key(|r| (r.iteration, r.created_at));
        out
    }

    pub fn record_fused(&mut self, mut ctx: FusedContext) -> Result<FusedContext, MemoryError> {
        ctx.created_at = self.tick();
        self.append(FUSED, &ctx)?;
        self.fused.push(ctx.clone());
        Ok(ctx)
    }

    /// The most recent fused context of a task. A fused context summarizes a
    /// failed iteration, so it is withheld along with reflections when the
    /// introspection layer is disabled.
    pub fn latest_fused(&self, task_id: &str) -> Option<FusedContext> {
        if !self.io_enabled {
            return None;
        }
        self.fused.iter().filter(|f| f.task_id == task_id).max_by_key(|f| (f.iteration, f.created_at)).cloned()
    }
}

/// Compress an iteration transcript to at most `budget` characters while
/// keeping every metric outcome in structured form.
pub fn fuse_context(trace: &IterationTrace, budget: usize, llm: &dyn LlmBackend) -> Result<FusedContext, MemoryError> {
    if budget < MIN_BUDGET {
        return Err(MemoryError::BudgetTooSmall(budget));
    }
    let text = trace.text.trim();
    let summary = if text.chars().count() <= budget {
        text.to_string()
    } else {
        let prompt = Prompt::new(Stage::Fuse)
            .iteration(trace.iteration)
            .task(&trace.task_id)
            .system(format!(
                "Condense this design iteration into at most {budget} characters. Keep decisions and their rationale."
            ))
            .user(text)
            .payload(serde_json::json!({ "trace": text, "budget": budget }));
        truncate_chars(llm.complete(&prompt)?.trim(), budget)
    };
    Ok(FusedContext {
        task_id: trace.task_id.clone(),
        iteration: trace.iteration,
        summary,
        preserved_outcomes: outcomes(&trace.report, &trace.spec),
        char_budget: budget,
        created_at: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;
    use crate::spec::{Level, SpecTarget};
    use proptest::prelude::*;

    fn reference_spec() -> Specification {
        Specification::new(
            "walk",
            Level::Easy,
            [
                SpecTarget::at_least(Metric::Gain, 70.0),
                SpecTarget::at_least(Metric::Gbw, 2e5),
                SpecTarget::at_least(Metric::Pm, 60.0),
                SpecTarget::at_least(Metric::Cmrr, 50.0),
                SpecTarget::at_least(Metric::Psrr, 40.0),
                SpecTarget::at_least(Metric::Psrn, 40.0),
                SpecTarget::at_most(Metric::Power, 35.0),
            ],
        )
        .unwrap()
    }

    fn reference_report() -> PerformanceReport {
        PerformanceReport::ok([
            (Metric::Gain, 72.88),
            (Metric::Gbw, 2.4e5),
            (Metric::Pm, 63.80),
            (Metric::Cmrr, 54.57),
            (Metric::Psrr, 43.88),
            (Metric::Psrn, 46.55),
            (Metric::Power, 30.35),
        ])
        .unwrap()
    }

    fn with_pm(pm: f64) -> PerformanceReport {
        let mut r = reference_report();
        r.values.insert(Metric::Pm, pm);
        r
    }

    #[test]
    fn insight_requires_pass_and_persists() {
        let dir = tempfile::tempdir().unwrap();
        let spec = reference_spec();
        let mut s = MemoryStore::open(dir.path()).unwrap();
        assert!(matches!(s.record_insight(&spec, "two_stage", "x", &with_pm(50.0)), Err(MemoryError::NotPassing)));
        assert!(matches!(s.record_insight(&spec, "two_stage", " ", &reference_report()), Err(MemoryError::EmptySummary)));
        let rec = s.record_insight(&spec, "two_stage", "Miller with Rz", &reference_report()).unwrap();
        drop(s);
        let s = MemoryStore::open(dir.path()).unwrap();
        assert_eq!(s.retrieve_insights(&spec, 3), vec![rec]);
    }

    #[test]
    fn insight_ranking_by_spec_similarity() {
        let spec = reference_spec();
        // shares six of seven thresholds with the query
        let near = Specification::new(
            "near",
            Level::Easy,
            spec.targets().map(|t| if t.metric == Metric::Gain { SpecTarget::at_least(Metric::Gain, 90.0) } else { *t }),
        )
        .unwrap();
        let far = Specification::new("far", Level::Easy, [SpecTarget::at_most(Metric::Power, 1.0)]).unwrap();

        // Independent check of both cosines over the signed vectors.
        let q = [0.70, 2e5f64.log10() / 9.0, 60.0 / 90.0, 0.50, 0.40, 0.40, -(36.0f64).log10() / 4.0];
        let n = [0.90, q[1], q[2], q[3], q[4], q[5], q[6]];
        let f = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -(2.0f64).log10() / 4.0];
        // order of Metric::ALL
        let order = Metric::ALL.iter().map(|m| m.as_str()).collect::<Vec<_>>();
        assert_eq!(order, ["power", "gain", "cmrr", "psrr", "gbw", "pm", "psrn"]);
        let reorder = |v: [f64; 7]| [v[6], v[0], v[3], v[4], v[1], v[2], v[5]];
        let dot = |a: [f64; 7], b: [f64; 7]| a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>();
        let cos = |a, b| dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
        let (q, n, f) = (reorder(q), reorder(n), reorder(f));
        assert!((spec_similarity(&spec, &near) - cos(q, n)).abs() < 1e-12);
        assert!((spec_similarity(&spec, &far) - cos(q, f)).abs() < 1e-12);
        assert!(cos(q, n) > cos(q, f));

        let mut s = MemoryStore::in_memory();
        let pass_all = PerformanceReport::ok([
            (Metric::Gain, 100.0),
            (Metric::Gbw, 1e6),
            (Metric::Pm, 80.0),
            (Metric::Cmrr, 80.0),
            (Metric::Psrr, 80.0),
            (Metric::Psrn, 80.0),
            (Metric::Power, 0.5),
        ])
        .unwrap();
        s.record_insight(&far, "a", "far", &pass_all).unwrap();
        s.record_insight(&near, "b", "near", &pass_all).unwrap();
        let got = s.retrieve_insights(&spec, 2);
        assert_eq!(got[0].summary, "near");
        assert_eq!(got[1].summary, "far");
    }

    #[test]
    fn identical_specs_rank_newest_first() {
        let spec = reference_spec();
        let mut s = MemoryStore::in_memory();
        s.record_insight(&spec, "a", "old", &reference_report()).unwrap();
        s.record_insight(&spec, "a", "new", &reference_report()).unwrap();
        assert_eq!(s.retrieve_insights(&spec, 1)[0].summary, "new");
        assert!(MemoryStore::in_memory().retrieve_insights(&spec, 3).is_empty());
    }

    #[test]
    fn reflection_on_pm_failure() {
        let spec = reference_spec();
        let mut s = MemoryStore::in_memory();
        let llm = ScriptedBackend::new();
        assert!(matches!(
            s.record_reflection("t", 1, &reference_report(), &spec, &llm),
            Err(MemoryError::NotFailing)
        ));
        let r = s.record_reflection("t", 1, &with_pm(47.0), &spec, &llm).unwrap();
        assert_eq!(r.failed_metrics, vec![Metric::Pm]);
        assert_eq!(r.worst_metric, Some(Metric::Pm));
        assert!(r.corrective_action.to_lowercase().contains("phase margin"));
    }

    #[test]
    fn reflection_on_sim_failure() {
        let mut s = MemoryStore::in_memory();
        let r = s
            .record_reflection("t", 1, &PerformanceReport::failed(SimStatus::NonConvergent), &reference_spec(), &ScriptedBackend::new())
            .unwrap();
        assert!(r.failed_metrics.is_empty());
        assert!(r.failure_cause.contains("did not converge"));
    }

    #[test]
    fn reflections_are_task_scoped_and_ordered() {
        let spec = reference_spec();
        let llm = ScriptedBackend::new();
        let mut s = MemoryStore::in_memory();
        s.record_reflection("a", 2, &with_pm(40.0), &spec, &llm).unwrap();
        s.record_reflection("b", 1, &with_pm(40.0), &spec, &llm).unwrap();
        s.record_reflection("a", 1, &with_pm(40.0), &spec, &llm).unwrap();
        let a: Vec<u32> = s.retrieve_reflections("a").iter().map(|r| r.iteration).collect();
        assert_eq!(a, vec![1, 2]);
        assert_eq!(s.retrieve_reflections("b").len(), 1);
        assert!(s.retrieve_reflections("zzz").is_empty());
    }

    #[test]
    fn layer_switches_are_independent() {
        let spec = reference_spec();
        let llm = ScriptedBackend::new();
        let mut s = MemoryStore::in_memory().with_layers(false, true);
        s.record_insight(&spec, "a", "x", &reference_report()).unwrap();
        s.record_reflection("t", 1, &with_pm(40.0), &spec, &llm).unwrap();
        assert!(s.retrieve_insights(&spec, 3).is_empty());
        assert_eq!(s.retrieve_reflections("t").len(), 1);
        let s = s.with_layers(true, false);
        assert_eq!(s.retrieve_insights(&spec, 3).len(), 1);
        assert!(s.retrieve_reflections("t").is_empty());
    }

    #[test]
    fn fusion_keeps_all_outcomes_under_budget() {
        let spec = reference_spec();
        let text: String = (0..400).map(|i| format!("step {i}: adjusted w1 and re-simulated\n")).collect();
        assert!(text.len() > 10_000);
        let trace = IterationTrace { task_id: "t".into(), iteration: 1, text, report: with_pm(47.0), spec: spec.clone() };
        let f = fuse_context(&trace, 1000, &ScriptedBackend::new()).unwrap();
        assert!(f.summary.chars().count() <= 1000);
        assert_eq!(f.preserved_outcomes.len(), 7);
        let pm = f.preserved_outcomes.iter().find(|o| o.metric == Metric::Pm).unwrap();
        assert_eq!(pm.value, Some(47.0));
        assert!(!pm.passed());

        let short = IterationTrace { text: "short trace".into(), ..trace.clone() };
        assert_eq!(fuse_context(&short, 300, &ScriptedBackend::new()).unwrap().summary, "short trace");
        assert!(matches!(fuse_context(&trace, 100, &ScriptedBackend::new()), Err(MemoryError::BudgetTooSmall(100))));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Insight(f64),
        Reflect(u8, u32),
        Fuse(u8, u32),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (60.0f64..90.0).prop_map(Op::Insight),
            (0u8..3, 1u32..4).prop_map(|(t, i)| Op::Reflect(t, i)),
            (0u8..3, 1u32..4).prop_map(|(t, i)| Op::Fuse(t, i)),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn reopen_reproduces_retrievals(ops in proptest::collection::vec(op(), 0..20)) {
            let dir = tempfile::tempdir().unwrap();
            let spec = reference_spec();
            let llm = ScriptedBackend::new();
            let mut s = MemoryStore::open(dir.path()).unwrap();
            for o in &ops {
                match o {
                    Op::Insight(pm) => { s.record_insight(&spec, "t", "ok", &with_pm(*pm)).unwrap(); }
                    Op::Reflect(t, i) => { s.record_reflection(&format!("task{t}"), *i, &with_pm(40.0), &spec, &llm).unwrap(); }
                    Op::Fuse(t, i) => {
                        let trace = IterationTrace { task_id: format!("task{t}"), iteration: *i, text: "x".into(), report: with_pm(40.0), spec: spec.clone() };
                        let f = fuse_context(&trace, 256, &llm).unwrap();
                        s.record_fused(f).unwrap();
                    }
                }
            }
            let snapshot = |s: &MemoryStore| {
                let tasks = ["task0", "task1", "task2"];
                (
                    s.retrieve_insights(&spec, 5),
                    tasks.iter().map(|t| s.retrieve_reflections(t)).collect::<Vec<_>>(),
                    tasks.iter().map(|t| s.latest_fused(t)).collect::<Vec<_>>(),
                )
            };
            let before = snapshot(&s);
            drop(s);
            let s = MemoryStore::open(dir.path()).unwrap();
            prop_assert_eq!(before, snapshot(&s));
        }
    }
}
