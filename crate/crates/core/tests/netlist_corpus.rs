use std::path::PathBuf;

use proptest::prelude::*;
use strata_core::agents::TechLimits;
use strata_core::netlist::{parse, validate, Issue, Netlist};
use strata_core::simulation::{run_testbench, MockBackend, TestbenchSuite};
use strata_core::spec::Assignment;
use strata_core::testkit::random_netlist;

fn corpus() -> Vec<(String, Netlist)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/topologies");
    let mut out: Vec<(String, Netlist)> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.join("netlist.sp").is_file())
        .map(|p| {
            let text = std::fs::read_to_string(p.join("netlist.sp")).unwrap();
            let id = p.file_name().unwrap().to_string_lossy().into_owned();
            let n = parse(&text).unwrap_or_else(|e| panic!("{id}: {e}"));
            (id, n)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Move one terminal onto a node nothing else touches.
fn disconnect(n: &Netlist, device: usize, terminal: usize) -> Netlist {
    let mut m = n.clone();
    m.devices[device].nodes[terminal] = "dangling".into();
    m
}

fn assert_every_disconnection_flagged(n: &Netlist, label: &str) -> usize {
    let mut count = 0;
    for (d, dev) in n.devices.iter().enumerate() {
        for t in 0..dev.nodes.len() {
            let issues = validate(&disconnect(n, d, t));
            assert!(
                issues.contains(&Issue::FloatingNode { node: "dangling".into() }),
                "{label}: {} terminal {t} not flagged: {issues:?}",
                dev.name
            );
            count += 1;
        }
    }
    count
}

#[test]
fn corpus_round_trips_and_validates() {
    let corpus = corpus();
    assert_eq!(corpus.len(), 10);
    for (id, n) in &corpus {
        assert_eq!(&parse(&n.serialize()).unwrap(), n, "{id}");
        assert!(validate(n).is_empty(), "{id}: {:?}", validate(n));
        assert!(n.cell.is_some() && !n.symbols().is_empty(), "{id}");
    }
}

#[test]
fn corpus_disconnections_are_all_flagged() {
    let total: usize = corpus().iter().map(|(id, n)| assert_every_disconnection_flagged(n, id)).sum();
    assert!(total > 100);
}

#[test]
fn corpus_simulates_under_mock_at_geometric_midpoints() {
    let limits = TechLimits::default();
    for (id, n) in corpus() {
        let assignment: Assignment = n
            .symbols()
            .into_iter()
            .map(|s| {
                let b = limits.bound(&s);
                let mid = (b.lower * b.upper).sqrt();
                (s, mid)
            })
            .collect();
        let bound = n.bind(&assignment).unwrap();
        let report = run_testbench(&MockBackend, &bound, &TestbenchSuite::default())
            .unwrap_or_else(|e| panic!("{id}: {e}"));
        assert!(report.values.values().all(|v| v.is_finite()), "{id}: {report:?}");
    }
}

#[test]
fn generated_netlists_are_valid() {
    for seed in 0..500 {
        let n = random_netlist(seed);
        assert!(validate(&n).is_empty(), "seed {seed}: {:?}\n{}", validate(&n), n.serialize());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn generated_netlists_round_trip(seed in any::<u64>()) {
        let n = random_netlist(seed);
        let text = n.serialize();
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &n);
        prop_assert_eq!(back.serialize(), text);
    }

    #[test]
    fn generated_disconnections_are_flagged(seed in any::<u64>()) {
        let n = random_netlist(seed);
        let label = format!("seed {seed}");
        prop_assert!(assert_every_disconnection_flagged(&n, &label) > 0);
    }
}
