use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::llm::{Prompt, Stage};
use crate::memory::{FusedContext, InsightRecord, ReflectionRecord};
use crate::spec::Specification;

/// Context sections in their fixed rendering order.
pub const SECTION_ORDER: [&str; 6] = ["specification", "insights", "reflections", "fused", "knowledge", "candidates"];

/// A ranked topology shown to an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub id: String,
    pub similarity: f64,
    pub description: String,
}

/// Memory and retrieval context for one agent call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePrompt {
    pub stage: Stage,
    pub iteration: u32,
    pub spec: Specification,
    pub insights: Vec<InsightRecord>,
    pub reflections: Vec<ReflectionRecord>,
    pub fused: Option<FusedContext>,
    pub knowledge: Option<String>,
    pub candidates: Vec<CandidateSummary>,
}

impl StagePrompt {
    pub fn new(stage: Stage, iteration: u32, spec: &Specification) -> Self {
        Self {
            stage,
            iteration,
            spec: spec.clone(),
            insights: vec![],
            reflections: vec![],
            fused: None,
            knowledge: None,
            candidates: vec![],
        }
    }

    /// Rendered non-empty sections, in [`SECTION_ORDER`].
    pub fn sections(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let spec: Vec<String> = self.spec.targets().map(|t| format!("- {t}")).collect();
        out.push(("specification", spec.join("\n")));
        if !self.insights.is_empty() {
            let lines: Vec<String> =
                self.insights.iter().map(|i| format!("- [{}] {}", i.topology_id, i.summary)).collect();
            out.push(("insights", lines.join("\n")));
        }
        if !self.reflections.is_empty() {
            let lines: Vec<String> = self
                .reflections
                .iter()
                .map(|r| format!("- iteration {}: {} Action: {}", r.iteration, r.failure_cause, r.corrective_action))
                .collect();
            out.push(("reflections", lines.join("\n")));
        }
        if let Some(f) = &self.fused {
            let mut text = f.summary.clone();
            for o in &f.preserved_outcomes {
                text.push_str(&format!("\n- {o}"));
            }
            out.push(("fused", text));
        }
        if let Some(k) = self.knowledge.as_ref().filter(|k| !k.trim().is_empty()) {
            out.push(("knowledge", k.clone()));
        }
        if !self.candidates.is_empty() {
            let lines: Vec<String> = self
                .candidates
                .iter()
                .map(|c| format!("- {} ({:.3}): {}", c.id, c.similarity, c.description))
                .collect();
            out.push(("candidates", lines.join("\n")));
        }
        out
    }

    /// Build the backend prompt: context sections, then the stage request.
    /// The payload carries the sections and reflections alongside `extra`.
    pub fn render(&self, task_id: &str, system: &str, request: &str, extra: Json) -> Prompt {
        let sections = self.sections();
        let mut user = String::new();
        for (name, body) in &sections {
            user.push_str(&format!("## {name}\n{body}\n\n"));
        }
        user.push_str(&format!("## request\n{request}"));
        let mut payload = json!({
            "spec": self.spec,
            "sections": sections.iter().map(|(k, v)| json!({ "name": k, "text": v })).collect::<Vec<_>>(),
            "reflections": self.reflections,
        });
        if let (Some(p), Json::Object(extra)) = (payload.as_object_mut(), extra) {
            p.extend(extra);
        }
        Prompt::new(self.stage).iteration(self.iteration).task(task_id).system(system).user(user).payload(payload)
    }
}

/// Section name to text, read back from a captured prompt payload.
pub fn captured_sections(prompt: &Prompt) -> Vec<(String, String)> {
    prompt.payload["sections"]
        .as_array()
        .map(|a| {
            a.iter()
                .map(|s| (s["name"].as_str().unwrap_or("").to_string(), s["text"].as_str().unwrap_or("").to_string()))
                .collect()
        })
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{Level, Metric, SpecTarget};

    #[test]
    fn sections_follow_fixed_order() {
        let spec = Specification::new("t", Level::Easy, [SpecTarget::at_least(Metric::Gain, 60.0)]).unwrap();
        let mut p = StagePrompt::new(Stage::Size, 2, &spec);
        p.knowledge = Some("k".into());
        p.candidates.push(CandidateSummary { id: "a".into(), similarity: 0.5, description: "d".into() });
        p.reflections.push(ReflectionRecord {
            task_id: "t".into(),
            iteration: 1,
            status: crate::spec::SimStatus::Ok,
            failure_cause: "pm low.".into(),
            corrective_action: "add rz.".into(),
            failed_metrics: vec![Metric::Pm],
            worst_metric: Some(Metric::Pm),
            created_at: 0,
        });
        let names: Vec<&str> = p.sections().iter().map(|(n, _)| *n).collect();
        assert_eq!(names, vec!["specification", "reflections", "knowledge", "candidates"]);
        let order: Vec<usize> = names.iter().map(|n| SECTION_ORDER.iter().position(|s| s == n).unwrap()).collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
        let prompt = p.render("t", "sys", "do it", json!({ "symbols": ["w1"] }));
        assert_eq!(captured_sections(&prompt).len(), 4);
        assert_eq!(prompt.payload["symbols"][0], "w1");
        let text = prompt.text();
        assert!(text.find("## reflections").unwrap() < text.find("## knowledge").unwrap());
        assert!(text.ends_with("## request\ndo it"));
    }
}
