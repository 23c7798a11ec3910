use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use strata_core::agents::TaskResult;
use strata_core::metrics::{average_iterations, pass_at_k, AvgIterations};
use strata_core::spec::{EvalOutcome, Level};

use crate::config::BenchmarkConfig;
use crate::BenchError;

/// One run of one task. `result` is relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u32,
    pub passed: bool,
    pub iterations_used: u32,
    pub normalized_search_space: Option<f64>,
    pub result: Option<String>,
    /// Why the trial produced no result.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: u32,
    pub task_id: String,
    pub level: Level,
    pub n: u32,
    pub c: u32,
    /// Percent.
    pub pass_at_k: f64,
    pub avg_iterations: AvgIterations,
    pub mean_normalized_search_space: Option<f64>,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overall {
    /// Mean of the per-task values.
    pub pass_at_k: f64,
    /// Mean over tasks that have a value.
    pub avg_iterations: AvgIterations,
    pub mean_normalized_search_space: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub tasks: Vec<TaskSummary>,
    pub overall: Overall,
}

impl BenchmarkReport {
    pub fn failed_trials(&self) -> usize {
        self.tasks.iter().flat_map(|t| &t.trials).filter(|t| t.error.is_some()).count()
    }

    pub fn save(&self, dir: &Path) -> Result<(), BenchError> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self).map_err(|e| BenchError::Report(e.to_string()))?;
        std::fs::write(dir.join("report.json"), json)?;
        std::fs::write(dir.join("report.md"), render_markdown(self))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, BenchError> {
        let path = dir.join("report.json");
        let text = std::fs::read_to_string(&path).map_err(|e| BenchError::Report(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| BenchError::Report(format!("{}: {e}", path.display())))
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Aggregate one task's trials.
pub fn summarize_task(task: u32, task_id: &str, level: Level, k: u32, trials: Vec<TrialRecord>) -> Result<TaskSummary, BenchError> {
    let n = trials.len() as u32;
    let c = trials.iter().filter(|t| t.passed).count() as u32;
    let outcome = EvalOutcome {
        n,
        c,
        k,
        iterations_per_pass: trials.iter().filter(|t| t.passed).map(|t| t.iterations_used).collect(),
    };
    let p = pass_at_k(u64::from(n), u64::from(c), u64::from(k)).map_err(|e| BenchError::Report(e.to_string()))?;
    Ok(TaskSummary {
        task,
        task_id: task_id.to_string(),
        level,
        n,
        c,
        pass_at_k: 100.0 * p,
        avg_iterations: average_iterations(std::slice::from_ref(&outcome)),
        mean_normalized_search_space: mean(trials.iter().filter_map(|t| t.normalized_search_space)),
        trials,
    })
}

pub fn overall(tasks: &[TaskSummary]) -> Overall {
    let iters = mean(tasks.iter().filter_map(|t| t.avg_iterations.value()));
    Overall {
        pass_at_k: mean(tasks.iter().map(|t| t.pass_at_k)).unwrap_or(0.0),
        avg_iterations: iters.map_or(AvgIterations::NotAvailable, AvgIterations::Value),
        mean_normalized_search_space: mean(tasks.iter().filter_map(|t| t.mean_normalized_search_space)),
    }
}

pub fn trial_record(trial: u32, result: &TaskResult, path: Option<String>) -> TrialRecord {
    TrialRecord {
        trial,
        passed: result.passed,
        iterations_used: result.iterations_used,
        normalized_search_space: result.normalized_search_space(),
        result: path,
        error: None,
    }
}

/// Rebuild every aggregate from the stored per-trial results under `dir`.
pub fn recompute(report: &BenchmarkReport, dir: &Path) -> Result<BenchmarkReport, BenchError> {
    let mut tasks = Vec::with_capacity(report.tasks.len());
    for t in &report.tasks {
        let mut trials = Vec::with_capacity(t.trials.len());
        for rec in &t.trials {
            let fresh = match &rec.result {
                Some(rel) => {
                    let text = std::fs::read_to_string(dir.join(rel))?;
                    let result: TaskResult =
                        serde_json::from_str(&text).map_err(|e| BenchError::Report(format!("{rel}: {e}")))?;
                    trial_record(rec.trial, &result, Some(rel.clone()))
                }
                None => TrialRecord { error: rec.error.clone(), ..failed_trial(rec.trial) },
            };
            trials.push(fresh);
        }
        tasks.push(summarize_task(t.task, &t.task_id, t.level, report.config.k, trials)?);
    }
    let overall = overall(&tasks);
    Ok(BenchmarkReport { config: report.config.clone(), tasks, overall })
}

pub fn failed_trial(trial: u32) -> TrialRecord {
    TrialRecord {
        trial,
        passed: false,
        iterations_used: 0,
        normalized_search_space: None,
        result: None,
        error: None,
    }
}

const ROW_PASS: &str = "Pass@k (%)";
const ROW_ITER: &str = "Avg. iterations";
const ROW_NSS: &str = "Normalized search space";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.3}"))
}

/// Metric rows by task column, as displayed.
pub fn table_cells(report: &BenchmarkReport) -> BTreeMap<String, Vec<String>> {
    let mut rows = BTreeMap::new();
    let mut pass: Vec<String> = report.tasks.iter().map(|t| format!("{:.1}", t.pass_at_k)).collect();
    pass.push(format!("{:.1}", report.overall.pass_at_k));
    let mut iters: Vec<String> = report.tasks.iter().map(|t| t.avg_iterations.to_string()).collect();
    iters.push(report.overall.avg_iterations.to_string());
    let mut nss: Vec<String> = report.tasks.iter().map(|t| fmt_opt(t.mean_normalized_search_space)).collect();
    nss.push(fmt_opt(report.overall.mean_normalized_search_space));
    rows.insert(ROW_PASS.to_string(), pass);
    rows.insert(ROW_ITER.to_string(), iters);
    rows.insert(ROW_NSS.to_string(), nss);
    rows
}

/// Tasks as columns, with a trailing Avg. column.
pub fn render_markdown(report: &BenchmarkReport) -> String {
    let c = &report.config;
    let mut header = vec!["Metric".to_string()];
    header.extend(report.tasks.iter().map(|t| t.task.to_string()));
    header.push("Avg.".to_string());
    let mut out = format!(
        "# Benchmark report\n\nTrials: {}, k = {}, max iterations: {}, LLM: {:?}, simulator: {:?}, seed: {}\n\
         Ablations: EM {}, IO {}, knowledge {}\n\n",
        c.trials,
        c.k,
        c.max_iterations,
        c.llm,
        c.sim,
        c.seed,
        on_off(!c.ablations.disable_em),
        on_off(!c.ablations.disable_io),
        on_off(!c.ablations.disable_knowledge),
    );
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    let cells = table_cells(report);
    for row in [ROW_PASS, ROW_ITER, ROW_NSS] {
        out.push_str(&format!("| {row} | {} |\n", cells[row].join(" | ")));
    }
    let failed = report.failed_trials();
    if failed > 0 {
        out.push_str(&format!("\n{failed} trial(s) ended with an error.\n"));
    }
    out
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

/// Header and rows of the first table in a rendered report.
pub fn parse_markdown_table(md: &str) -> (Vec<String>, BTreeMap<String, Vec<String>>) {
    let split = |l: &str| l.trim().trim_matches('|').split('|').map(|c| c.trim().to_string()).collect::<Vec<_>>();
    let mut lines = md.lines().skip_while(|l| !l.starts_with('|'));
    let header = lines.next().map(split).unwrap_or_default();
    let rows = lines
        .skip(1)
        .take_while(|l| l.starts_with('|'))
        .map(split)
        .filter_map(|mut r| (!r.is_empty()).then(|| (r.remove(0), r)))
        .collect();
    (header.into_iter().skip(1).collect(), rows)
}
