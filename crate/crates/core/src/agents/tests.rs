use std::path::PathBuf;

use proptest::prelude::*;

use super::*;
use crate::llm::{Prompt, Recorder, ScriptedBackend};
use crate::retrieval::{build_topology_db, ingest_documents, HashEmbedder};
use crate::simulation::MockBackend;
use crate::spec::{Level, Metric, SpecTarget};

fn data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

struct Fixture {
    embedder: HashEmbedder,
    db: TopologyDb,
    kb: KnowledgeStore,
    rules: RerankRules,
}

fn fixture() -> Fixture {
    let embedder = HashEmbedder::new(HashEmbedder::DEFAULT_DIM);
    let (db, rejected) = build_topology_db(&data().join("topologies"), &embedder).unwrap();
    assert!(rejected.is_empty());
    let (kb, _) = ingest_documents(&data().join("docs"), &embedder).unwrap();
    let rules = RerankRules::load(&data().join("rerank_rules.json")).unwrap();
    Fixture { embedder, db, kb, rules }
}

fn agents<'a>(f: &'a Fixture, llm: &'a dyn LlmBackend, config: AgentConfig) -> Agents<'a> {
    Agents {
        llm,
        sim: &MockBackend,
        embedder: &f.embedder,
        topologies: &f.db,
        knowledge: Some(&f.kb),
        rules: &f.rules,
        config,
    }
}

fn walkthrough_spec() -> Specification {
    Specification::new(
        "walkthrough",
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

fn walkthrough_llm() -> ScriptedBackend {
    ScriptedBackend::from_dir(&data().join("fixtures/walkthrough")).unwrap()
}

#[test]
fn walkthrough_fails_on_phase_margin_then_passes_with_nulling_resistor() {
    let f = fixture();
    let llm = walkthrough_llm();
    let a = agents(&f, &llm, AgentConfig::default());
    let mut memory = MemoryStore::in_memory();
    let r = a.run_task(&walkthrough_spec(), &mut memory, 0).unwrap();

    assert!(r.passed);
    assert_eq!(r.iterations_used, 2);
    assert_eq!(r.topology_id.as_deref(), Some("two_stage_miller"));
    let first = &r.iterations[0];
    assert!(!first.passed);
    assert!(first.edits.is_empty());
    assert_eq!(first.fom.unwrap().worst_metric, Some(Metric::Pm));
    assert!(first.normalized_search_space.unwrap() < 1.0);

    let reflections = memory.retrieve_reflections("walkthrough/0");
    assert_eq!(reflections.len(), 1);
    assert_eq!(reflections[0].worst_metric, Some(Metric::Pm));
    assert!(reflections[0].corrective_action.to_lowercase().contains("phase margin"));

    let second = &r.iterations[1];
    assert_eq!(second.edits.len(), 2);
    assert!(second.passed);
    assert!(second.space.as_ref().unwrap().get("rz").is_some());
    assert!(r.final_netlist.as_ref().unwrap().contains("rz nz out {rz}"));
    assert_eq!(memory.insight_count(), 1);
}

#[test]
fn runs_are_deterministic() {
    let f = fixture();
    let llm = walkthrough_llm();
    let a = agents(&f, &llm, AgentConfig::default());
    let one = a.run_task(&walkthrough_spec(), &mut MemoryStore::in_memory(), 0).unwrap();
    let two = a.run_task(&walkthrough_spec(), &mut MemoryStore::in_memory(), 0).unwrap();
    assert_eq!(one, two);
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&two).unwrap());
}

#[test]
fn relaxed_spec_passes_at_first_iteration() {
    let f = fixture();
    let llm = ScriptedBackend::new();
    let a = agents(&f, &llm, AgentConfig::default());
    let spec = Specification::new(
        "relaxed",
        Level::Easy,
        [
            SpecTarget::at_least(Metric::Gain, 20.0),
            SpecTarget::at_least(Metric::Pm, 30.0),
            SpecTarget::at_least(Metric::Gbw, 1e4),
            SpecTarget::at_most(Metric::Power, 1000.0),
        ],
    )
    .unwrap();
    let mut memory = MemoryStore::in_memory();
    let r = a.run_task(&spec, &mut memory, 0).unwrap();
    assert!(r.passed);
    assert_eq!(r.iterations_used, 1);
    assert!(memory.retrieve_reflections("relaxed/0").is_empty());
    assert_eq!(memory.insight_count(), 1);
}

#[test]
fn unsatisfiable_spec_exhausts_iterations() {
    let f = fixture();
    let llm = ScriptedBackend::new();
    let config = AgentConfig { bo: BoConfig { n_iterations: 2, ..BoConfig::default() }, ..AgentConfig::default() };
    let a = agents(&f, &llm, config);
    let spec = Specification::new("impossible", Level::Hard, [SpecTarget::at_least(Metric::Gain, 1000.0)]).unwrap();
    let mut memory = MemoryStore::in_memory();
    let r = a.run_task(&spec, &mut memory, 0).unwrap();
    assert!(!r.passed);
    assert_eq!(r.iterations_used, 3);
    assert_eq!(r.iterations.len(), 3);
    assert_eq!(memory.retrieve_reflections("impossible/0").len(), 3);
    assert!(memory.latest_fused("impossible/0").is_some());
    assert_eq!(memory.insight_count(), 0);
}

#[test]
fn reflections_seen_at_an_iteration_come_from_earlier_ones() {
    let f = fixture();
    let llm = Recorder::new(ScriptedBackend::new());
    let config = AgentConfig { bo: BoConfig { n_iterations: 1, ..BoConfig::default() }, ..AgentConfig::default() };
    let a = agents(&f, &llm, config);
    let spec = Specification::new("impossible", Level::Hard, [SpecTarget::at_least(Metric::Gain, 1000.0)]).unwrap();
    a.run_task(&spec, &mut MemoryStore::in_memory(), 0).unwrap();
    for p in llm.prompts(Stage::Size) {
        let seen: Vec<u64> = p.payload["reflections"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["iteration"].as_u64().unwrap())
            .collect();
        let expected: Vec<u64> = (1..u64::from(p.iteration)).collect();
        assert_eq!(seen, expected);
    }
}

fn size_prompts(memory: MemoryStore) -> Vec<Prompt> {
    let f = fixture();
    let llm = Recorder::new(walkthrough_llm());
    let a = agents(&f, &llm, AgentConfig::default());
    let mut memory = memory;
    a.run_task(&walkthrough_spec(), &mut memory, 0).unwrap();
    llm.prompts(Stage::Size)
}

#[test]
fn disabling_introspection_removes_failure_content_only() {
    let on = size_prompts(MemoryStore::in_memory());
    let off = size_prompts(MemoryStore::in_memory().with_layers(true, false));
    assert_eq!(on.len(), 2);
    // fixtures are keyed by stage and iteration, so both runs reach iteration 2
    assert_eq!(off.len(), 2);
    let on2 = captured_sections(&on[1]);
    let off2 = captured_sections(&off[1]);
    let names = |s: &[(String, String)]| s.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    assert!(names(&on2).contains(&"reflections".to_string()));
    assert!(names(&on2).contains(&"fused".to_string()));
    for (name, text) in &off2 {
        assert!(name != "reflections" && name != "fused");
        assert!(!text.to_lowercase().contains("phase margin is"), "{name} leaks failure details");
    }
    let keep = |s: Vec<(String, String)>| s.into_iter().filter(|(n, _)| n != "reflections" && n != "fused").collect::<Vec<_>>();
    assert_eq!(keep(on2), off2);
    assert!(off[1].payload["reflections"].as_array().unwrap().is_empty());
}

#[test]
fn disabling_evolution_hides_other_tasks() {
    let spec = walkthrough_spec();
    let seed = |store: MemoryStore| {
        let mut store = store;
        let report = PerformanceReport::ok([
        (Metric::Gain, 80.0),
        (Metric::Gbw, 3e5),
        (Metric::Pm, 65.0),
        (Metric::Cmrr, 60.0),
        (Metric::Psrr, 50.0),
        (Metric::Psrn, 50.0),
        (Metric::Power, 20.0),
    ])
        .unwrap();
        store.record_insight(&spec.clone().with_task_id("other"), "two_stage_miller_nulling", "Earlier task used Rz.", &report).unwrap();
        store
    };
    let mut seeded = seed(MemoryStore::in_memory());
    let mut hidden = seed(MemoryStore::in_memory()).with_layers(false, true);

    let f = fixture();
    let llm = Recorder::new(walkthrough_llm());
    let a = agents(&f, &llm, AgentConfig::default());
    a.run_task(&spec, &mut seeded, 0).unwrap();
    let with = llm.drain();
    a.run_task(&spec, &mut hidden, 0).unwrap();
    let without = llm.drain();

    let select = |ex: &[crate::llm::Exchange]| ex.iter().find(|e| e.prompt.stage == Stage::Select).unwrap().prompt.clone();
    let (w, wo) = (select(&with), select(&without));
    assert!(w.text().contains("Earlier task used Rz."));
    assert!(!wo.text().contains("Earlier task used Rz."));
    for e in &without {
        assert!(!e.prompt.text().contains("Earlier task used Rz."));
    }
    let strip = |s: Vec<(String, String)>| s.into_iter().filter(|(n, _)| n != "insights").collect::<Vec<_>>();
    assert_eq!(strip(captured_sections(&w)), captured_sections(&wo));
}

#[test]
fn empty_database_is_rejected_before_any_iteration() {
    let f = fixture();
    let empty = TopologyDb { dimension: f.db.dimension, entries: vec![] };
    let llm = Recorder::new(ScriptedBackend::new());
    let a = Agents { topologies: &empty, ..agents(&f, &llm, AgentConfig::default()) };
    assert!(matches!(a.run_task(&walkthrough_spec(), &mut MemoryStore::in_memory(), 0), Err(AgentError::EmptyDb)));
    assert!(llm.exchanges().is_empty());
    let bad = AgentConfig { max_iterations: 0, ..AgentConfig::default() };
    let a = agents(&f, &llm, bad);
    assert!(matches!(a.run_task(&walkthrough_spec(), &mut MemoryStore::in_memory(), 0), Err(AgentError::Config(_))));
}

#[test]
fn selection_returns_the_described_entry() {
    let f = fixture();
    let llm = walkthrough_llm();
    let a = agents(&f, &llm, AgentConfig::default());
    let sel = a.select_topology(&walkthrough_spec(), 1, &MemoryStore::in_memory(), "w/0", None).unwrap();
    assert_eq!(sel.entry.id, "two_stage_miller");
    assert_eq!(sel.candidates[0].id, "two_stage_miller");
    assert_eq!(sel.candidates.len(), 5);
}

fn miller() -> Netlist {
    crate::netlist::parse(&std::fs::read_to_string(data().join("topologies/two_stage_miller/netlist.sp")).unwrap()).unwrap()
}

#[test]
fn sizing_falls_back_and_clips() {
    let f = fixture();
    let llm = ScriptedBackend::new()
        .with_fixture("size_1", r#"{"bounds": {"w1": ["1u", "2u"], "l1": [1e-3, 2e-3], "w3": ["50u", "1"], "cc": [3e-12, 1e-12]}}"#);
    let a = agents(&f, &llm, AgentConfig::default());
    let p = a.propose_parameter_space(&miller(), &walkthrough_spec(), 1, &MemoryStore::in_memory(), "t/0", None).unwrap();
    let limits = TechLimits::default();
    assert_eq!(p.space.dim(), 9);
    let w1 = p.space.get("w1").unwrap();
    assert_eq!((w1.lower, w1.upper), (1e-6, 2e-6));
    assert_eq!(*p.space.get("l1").unwrap(), limits.bound("l1"), "range above the limits falls back");
    let w3 = p.space.get("w3").unwrap();
    assert_eq!((w3.lower, w3.upper), (50e-6, 100e-6));
    assert_eq!(*p.space.get("cc").unwrap(), limits.bound("cc"), "reversed range falls back");
    assert_eq!(*p.space.get("ib2").unwrap(), limits.bound("ib2"), "missing symbol gets the full range");
    assert!(p.warnings.iter().any(|w| w.starts_with("w3") && w.contains("clipped")));
    assert!(p.warnings.iter().any(|w| w.starts_with("ib2")));
    assert!(p.warnings.iter().all(|w| !w.starts_with("w1")));
}

#[test]
fn sizing_requires_symbols() {
    let f = fixture();
    let llm = ScriptedBackend::new();
    let a = agents(&f, &llm, AgentConfig::default());
    let fixed = miller().bind(&miller().symbols().into_iter().map(|s| (s, 1e-6)).collect()).unwrap();
    let err = a.propose_parameter_space(&fixed, &walkthrough_spec(), 1, &MemoryStore::in_memory(), "t/0", None);
    assert!(matches!(err, Err(AgentError::NoSymbols)));
}

#[test]
fn edits_with_unknown_nodes_are_rejected() {
    let f = fixture();
    let llm = ScriptedBackend::new().with_fixture(
        "refine_1",
        r#"{"edits": [{"action": "reconnect-terminal", "device": "cc", "terminal": 1, "node": "nowhere"}]}"#,
    );
    let a = agents(&f, &llm, AgentConfig::default());
    let n = miller();
    let r = a.refine_topology(&n, &walkthrough_spec(), 1, &MemoryStore::in_memory(), "t/0", None, &[]).unwrap();
    assert_eq!(r.netlist, n);
    assert!(r.edits.is_empty());
    assert!(r.rejected.is_some());
}

const NODES: &[&str] = &["n1", "n2", "out", "tail", "vdd", "vss", "nz", "fresh", "0"];
const DEVICES: &[&str] = &["m1", "m3", "m6", "cc", "itail", "i2", "rz", "ghost"];

fn edit_json() -> impl Strategy<Value = serde_json::Value> {
    let node = proptest::sample::select(NODES);
    let dev = proptest::sample::select(DEVICES);
    prop_oneof![
        (dev.clone(), 0usize..5, node.clone())
            .prop_map(|(d, t, n)| json!({"action": "reconnect-terminal", "device": d, "terminal": t, "node": n})),
        dev.clone().prop_map(|d| json!({"action": "remove-device", "name": d})),
        (proptest::sample::select(&["rx", "cx", "rz", "m9", "q1"][..]), node.clone(), node.clone())
            .prop_map(|(d, a, b)| json!({"action": "add-device", "device": {"name": d, "nodes": [a, b], "params": {"value": "{rx}"}}})),
        (dev, "[a-z]{1,3}", -1e3..1e3f64)
            .prop_map(|(d, k, v)| json!({"action": "set-param", "device": d, "name": k, "value": v})),
        Just(json!({"action": "explode"})),
        Just(json!("not an edit")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn refined_netlists_are_always_valid(edits in proptest::collection::vec(edit_json(), 0..5), wrap in any::<bool>()) {
        let f = fixture();
        let body = json!({ "edits": edits }).to_string();
        let response = if wrap { format!("Here you go:\n```json\n{body}\n```") } else { body[..body.len() / 2].to_string() };
        let llm = ScriptedBackend::new().with_fixture("refine_2", response);
        let a = agents(&f, &llm, AgentConfig::default());
        let n = miller();
        let r = a.refine_topology(&n, &walkthrough_spec(), 2, &MemoryStore::in_memory(), "t/0", None, &[]).unwrap();
        prop_assert!(netlist::validate(&r.netlist).is_empty());
        prop_assert!(!r.netlist.symbols().is_empty());
        if r.rejected.is_some() {
            prop_assert_eq!(&r.netlist, &n);
            prop_assert!(r.edits.is_empty());
        }
    }
}
