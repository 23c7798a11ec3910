use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value as Json};

use super::{LlmBackend, LlmError, Prompt, Stage};
use crate::retrieval::text::{split_sentences, truncate_chars};

/// Deterministic backend for offline runs and tests.
///
/// A response is looked up first in the fixture table under
/// `<stage>_<iteration>`; otherwise it is produced by a fixed template over
/// the prompt payload.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    fixtures: BTreeMap<String, String>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load every `*.json` / `*.txt` file in `dir` as a fixture keyed by its stem.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut fixtures = BTreeMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            if !matches!(ext, "json" | "txt") {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                fixtures.insert(stem.to_ascii_lowercase(), std::fs::read_to_string(&path)?.trim().to_string());
            }
        }
        Ok(Self { fixtures })
    }

    pub fn with_fixture(mut self, key: impl Into<String>, response: impl Into<String>) -> Self {
        self.fixtures.insert(key.into(), response.into());
        self
    }

    pub fn fixture_keys(&self) -> impl Iterator<Item = &str> {
        self.fixtures.keys().map(String::as_str)
    }
}

impl LlmBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let key = format!("{}_{}", prompt.stage, prompt.iteration);
        if let Some(r) = self.fixtures.get(&key) {
            return Ok(r.clone());
        }
        let p = &prompt.payload;
        Ok(match prompt.stage {
            Stage::Select => select(p).to_string(),
            Stage::Refine => refine(p).to_string(),
            Stage::Size => size(p).to_string(),
            Stage::Reflect => reflect(p).to_string(),
            Stage::Condense => condense(p),
            Stage::Expand => expand(p).to_string(),
            Stage::Summarize => summarize(p),
            Stage::Fuse => fuse(p),
        })
    }
}

fn target(spec: &Json, metric: &str) -> Option<f64> {
    spec["targets"]
        .as_array()?
        .iter()
        .find(|t| t["metric"] == metric)
        .and_then(|t| t["threshold"].as_f64())
}

fn select(p: &Json) -> Json {
    let spec = &p["spec"];
    let gain = target(spec, "gain").unwrap_or(60.0);
    let power = target(spec, "power").unwrap_or(f64::INFINITY);
    let rejection = target(spec, "cmrr").unwrap_or(0.0).max(target(spec, "psrr").unwrap_or(0.0));
    let gbw = target(spec, "gbw").unwrap_or(0.0);
    let description = if power <= 1.0 {
        "A low-power single-stage telescopic cascode transconductance amplifier biased in weak inversion. \
         Cascode devices stacked on the input pair raise the output resistance so one stage reaches the gain at microamp currents."
    } else if gain >= 80.0 || rejection >= 40.0 || gbw >= 1e6 {
        "A high-gain two-stage amplifier pairing a telescopic cascode first stage with a common-source output stage. \
         Miller compensation with a series nulling resistor spans the second stage from the cascoded node to the output."
    } else if gain >= 50.0 {
        "A two-stage Miller-compensated operational amplifier with an NMOS differential input pair. \
         The input stage with a current-mirror load drives a common-source second stage, and a compensation \
         capacitor across the second stage splits the poles."
    } else {
        "A single-stage five-transistor operational transconductance amplifier. \
         A differential pair feeds a current-mirror load that produces the single-ended output."
    };
    json!({ "description": description })
}

fn mentions_pm(reflections: &Json) -> bool {
    reflections.as_array().is_some_and(|rs| {
        rs.iter().any(|r| {
            r["failed_metrics"].as_array().is_some_and(|m| m.iter().any(|x| x == "pm"))
                || r["corrective_action"].as_str().is_some_and(|a| a.to_lowercase().contains("phase margin"))
        })
    })
}

/// Insert a nulling resistor between the Miller capacitor and the output
/// when a previous iteration failed on phase margin.
fn refine(p: &Json) -> Json {
    let text = p["netlist"].as_str().unwrap_or("");
    if !mentions_pm(&p["reflections"]) {
        return json!({ "edits": [] });
    }
    let Ok(n) = crate::netlist::parse(text) else {
        return json!({ "edits": [] });
    };
    if n.devices.iter().any(|d| d.kind == crate::netlist::DeviceKind::Resistor) {
        return json!({ "edits": [] });
    }
    let cap = n.devices.iter().find(|d| {
        d.kind == crate::netlist::DeviceKind::Capacitor && d.name.starts_with("cc") && d.nodes.iter().any(|x| x == "out")
    });
    let Some(cap) = cap else {
        return json!({ "edits": [] });
    };
    let terminal = cap.nodes.iter().position(|x| x == "out").unwrap_or(1);
    json!({ "edits": [
        { "action": "add-device", "device": { "name": "rz", "nodes": ["nz", "out"], "params": { "value": "{rz}" } } },
        { "action": "reconnect-terminal", "device": cap.name, "terminal": terminal, "node": "nz" },
    ]})
}

fn default_range(symbol: &str) -> (f64, f64) {
    match symbol.chars().next() {
        Some('w') => (1e-6, 50e-6),
        Some('l') => (0.5e-6, 4e-6),
        Some('c') => (0.5e-12, 5e-12),
        Some('i') => (1e-6, 100e-6),
        Some('r') => (1e3, 100e3),
        _ => (1e-6, 1e-3),
    }
}

fn size(p: &Json) -> Json {
    let supply = p["supply"].as_f64().unwrap_or(1.8);
    let power = target(&p["spec"], "power");
    let mut bounds = serde_json::Map::new();
    for s in p["symbols"].as_array().into_iter().flatten().filter_map(Json::as_str) {
        let (mut lo, mut hi) = default_range(s);
        if s.starts_with('i') {
            if let Some(pw) = power {
                hi = hi.min(pw * 1e-6 / supply);
                lo = lo.min(hi / 10.0);
            }
        }
        bounds.insert(s.to_string(), json!([lo, hi]));
    }
    json!({ "bounds": bounds })
}

fn action_for(metric: &str) -> &'static str {
    match metric {
        "pm" => "Improve phase margin: strengthen the compensation network, for example add a nulling resistor in series with the Miller capacitor or increase the compensation capacitance.",
        "gain" => "Increase DC gain with longer channel lengths, cascoding, or an additional gain stage.",
        "gbw" => "Raise gain-bandwidth by increasing input-pair transconductance or reducing the compensation capacitance.",
        "cmrr" => "Improve common-mode rejection by raising first-stage gain and tail-source output resistance.",
        "psrr" | "psrn" => "Improve supply rejection by raising loop gain and balancing the branch currents.",
        "power" => "Reduce power by lowering the bias currents.",
        _ => "Re-center the device sizes around the failing metric.",
    }
}

fn reflect(p: &Json) -> Json {
    let status = p["status"].as_str().unwrap_or("ok");
    if status != "ok" {
        return json!({
            "failure_cause": format!("Simulation did not converge (status {status}); no metrics were produced."),
            "corrective_action": "Re-center bias currents and device sizes so every transistor stays in saturation.",
        });
    }
    let outcomes: Vec<&Json> = p["outcomes"].as_array().map(|a| a.iter().collect()).unwrap_or_default();
    let failed: Vec<&str> = p["failed_metrics"].as_array().into_iter().flatten().filter_map(Json::as_str).collect();
    let worst = p["worst_metric"].as_str().or(failed.first().copied()).unwrap_or("");
    let cause = failed
        .iter()
        .map(|m| {
            let o = outcomes.iter().find(|o| o["metric"] == *m);
            match o {
                Some(o) => format!(
                    "{} is {:.4} against a target of {} {}",
                    m,
                    o["value"].as_f64().unwrap_or(f64::NAN),
                    if o["direction"] == "at-most" { "at most" } else { "at least" },
                    o["target"].as_f64().unwrap_or(f64::NAN)
                ),
                None => format!("{m} missed its target"),
            }
        })
        .collect::<Vec<_>>()
        .join("; ");
    let mut actions = vec![action_for(worst)];
    for m in &failed {
        let a = action_for(m);
        if !actions.contains(&a) {
            actions.push(a);
        }
    }
    json!({
        "failure_cause": if cause.is_empty() { "Specification not met.".to_string() } else { format!("{cause}.") },
        "corrective_action": actions.join(" "),
    })
}

const ARCH_WORDS: &[&str] = &["amplifier", "ota", "op-amp", "opamp", "architecture", "topology"];
const STRUCT_WORDS: &[&str] = &["stage", "mirror", "load", "cascode", "drives", "feeds", "signal", "output", "pair"];

fn condense(p: &Json) -> String {
    let text = p["text"].as_str().unwrap_or("");
    let sentences = split_sentences(text);
    if sentences.len() <= 2 {
        return sentences.join(" ");
    }
    let has = |s: &str, words: &[&str]| {
        let l = s.to_lowercase();
        words.iter().any(|w| l.contains(w))
    };
    let first = sentences.iter().position(|s| has(s, ARCH_WORDS)).unwrap_or(0);
    let second = sentences
        .iter()
        .enumerate()
        .position(|(i, s)| i != first && has(s, STRUCT_WORDS))
        .unwrap_or(if first == 0 { 1 } else { 0 });
    let (a, b) = if first < second { (first, second) } else { (second, first) };
    format!("{} {}", sentences[a], sentences[b])
}

const SYNONYMS: &[(&[&str], &str)] = &[
    (&["phase margin", "stability"], "phase margin stability Miller compensation nulling resistor"),
    (&["gain-bandwidth", "gbw", "bandwidth", "unity"], "gain-bandwidth unity-gain frequency transconductance"),
    (&["cmrr", "common-mode", "common mode"], "common-mode rejection tail current source"),
    (&["psrr", "psrn", "supply"], "power supply rejection noise"),
    (&["power", "current"], "low power bias current weak inversion"),
    (&["gain"], "DC gain output resistance cascode"),
];

fn expand(p: &Json) -> Json {
    let query = p["query"].as_str().unwrap_or("").trim();
    let m = p["m"].as_u64().unwrap_or(3).max(1) as usize;
    let lower = query.to_lowercase();
    let mut out = vec![query.to_string()];
    for (keys, syn) in SYNONYMS {
        if keys.iter().any(|k| lower.contains(k)) {
            out.push(syn.to_string());
            let topic = keys[0];
            out.push(format!("{topic} design techniques for operational amplifiers"));
            break;
        }
    }
    for filler in ["operational amplifier design guidelines", "analog amplifier sizing trade-offs"] {
        out.push(filler.to_string());
    }
    let mut seen = std::collections::BTreeSet::new();
    out.retain(|q| !q.is_empty() && seen.insert(q.clone()));
    out.truncate(m);
    json!({ "queries": out })
}

fn summarize(p: &Json) -> String {
    let budget = p["budget"].as_u64().unwrap_or(1200) as usize;
    let query = p["query"].as_str().unwrap_or("");
    let mut out = format!("Relevant to \"{query}\":");
    for c in p["chunks"].as_array().into_iter().flatten() {
        let title = c["title"].as_str().unwrap_or("");
        let lead = split_sentences(c["text"].as_str().unwrap_or("")).into_iter().next().unwrap_or_default();
        out.push_str(&format!(" [{}] {title}: {lead}", c["id"].as_str().unwrap_or("")));
    }
    truncate_chars(&out, budget)
}

fn fuse(p: &Json) -> String {
    let budget = p["budget"].as_u64().unwrap_or(4000) as usize;
    let trace = p["trace"].as_str().unwrap_or("");
    let mut out = String::new();
    for line in trace.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let head = truncate_chars(line, 160);
        if out.chars().count() + head.chars().count() + 1 > budget {
            break;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&head);
    }
    out
}
