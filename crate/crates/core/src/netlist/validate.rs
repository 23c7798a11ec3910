use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{DeviceKind, Netlist, GROUND};

/// A structural problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "kebab-case")]
pub enum Issue {
    /// Internal node touched by exactly one device terminal.
    FloatingNode { node: String },
    /// Connected group of nodes that reaches neither ground nor a port.
    NoGround { nodes: Vec<String> },
    NodeCountMismatch { device: String, expected: usize, found: usize },
    DuplicateDevice { name: String },
    UnresolvedSymbols { symbols: Vec<String> },
    /// Two-terminal device with both terminals on the same node.
    ShortedTerminals { device: String, node: String },
    UnknownSubckt { device: String, subckt: String },
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Issue::FloatingNode { node } => write!(f, "floating node `{node}`"),
            Issue::NoGround { nodes } => write!(f, "no ground reference for nodes {}", nodes.join(", ")),
            Issue::NodeCountMismatch { device, expected, found } => {
                write!(f, "device `{device}` has {found} nodes, expected {expected}")
            }
            Issue::DuplicateDevice { name } => write!(f, "duplicate device name `{name}`"),
            Issue::UnresolvedSymbols { symbols } => write!(f, "unresolved symbols {}", symbols.join(", ")),
            Issue::ShortedTerminals { device, node } => write!(f, "device `{device}` is shorted on `{node}`"),
            Issue::UnknownSubckt { device, subckt } => {
                write!(f, "instance `{device}` references unknown subcircuit `{subckt}`")
            }
        }
    }
}

/// Structural checks; placeholders are allowed.
pub fn validate(n: &Netlist) -> Vec<Issue> {
    check(n, false)
}

/// Structural checks plus the requirement that every placeholder is bound.
pub fn validate_numeric(n: &Netlist) -> Vec<Issue> {
    check(n, true)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn check(n: &Netlist, require_numeric: bool) -> Vec<Issue> {
    let mut issues = Vec::new();

    let mut seen = BTreeSet::new();
    for d in &n.devices {
        if !seen.insert(d.name.as_str()) {
            issues.push(Issue::DuplicateDevice { name: d.name.clone() });
        }
    }

    for d in &n.devices {
        let expected = match d.kind.terminal_count() {
            Some(c) => Some(c),
            None => {
                let sub = d.model.clone().unwrap_or_default();
                match n.subckt(&sub) {
                    Some(def) => Some(def.ports.len()),
                    None => {
                        issues.push(Issue::UnknownSubckt { device: d.name.clone(), subckt: sub });
                        None
                    }
                }
            }
        };
        if let Some(expected) = expected {
            if d.nodes.len() != expected {
                issues.push(Issue::NodeCountMismatch {
                    device: d.name.clone(),
                    expected,
                    found: d.nodes.len(),
                });
            }
        }
        if d.kind != DeviceKind::Mosfet && d.kind != DeviceKind::SubcktInstance && d.nodes.len() == 2 && d.nodes[0] == d.nodes[1] {
            issues.push(Issue::ShortedTerminals { device: d.name.clone(), node: d.nodes[0].clone() });
        }
    }

    // node degree and connectivity
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut degree: Vec<usize> = Vec::new();
    for d in &n.devices {
        for node in &d.nodes {
            let next = index.len();
            let id = *index.entry(node.as_str()).or_insert(next);
            if id == degree.len() {
                degree.push(0);
            }
            degree[id] += 1;
        }
    }
    for p in &n.ports {
        let next = index.len();
        let id = *index.entry(p.as_str()).or_insert(next);
        if id == degree.len() {
            degree.push(0);
        }
    }

    let ports: BTreeSet<&str> = n.ports.iter().map(String::as_str).collect();
    for (&node, &id) in &index {
        if degree[id] == 1 && node != GROUND && !ports.contains(node) {
            issues.push(Issue::FloatingNode { node: node.to_string() });
        }
    }

    let mut uf = UnionFind::new(index.len());
    for d in &n.devices {
        let mut ids = d.nodes.iter().map(|node| index[node.as_str()]);
        if let Some(first) = ids.next() {
            for other in ids {
                uf.union(first, other);
            }
        }
    }
    // A component is referenced if it contains ground or an externally driven port.
    let mut referenced = BTreeSet::new();
    for (&node, &id) in &index {
        if node == GROUND || ports.contains(node) {
            referenced.insert(uf.find(id));
        }
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (&node, &id) in &index {
        let root = uf.find(id);
        if !referenced.contains(&root) {
            groups.entry(root).or_default().push(node.to_string());
        }
    }
    for (_, nodes) in groups {
        issues.push(Issue::NoGround { nodes });
    }

    if require_numeric {
        let symbols: Vec<String> = n.symbols().into_iter().collect();
        if !symbols.is_empty() {
            issues.push(Issue::UnresolvedSymbols { symbols });
        }
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse;

    #[test]
    fn degenerate_resistor_is_shorted_and_ungrounded() {
        let n = parse("R1 a a 1k").unwrap();
        let issues = validate(&n);
        assert!(issues.iter().any(|i| matches!(i, Issue::ShortedTerminals { .. })));
        assert!(issues.iter().any(|i| matches!(i, Issue::NoGround { .. })));
    }

    #[test]
    fn removing_ground_is_detected() {
        let good = parse("* rc\nv1 in 0 dc 1\nr1 in out 1k\nc1 out 0 1p\n").unwrap();
        assert!(validate(&good).is_empty());
        let bad = parse("* rc\nv1 in x dc 1\nr1 in out 1k\nc1 out x 1p\n").unwrap();
        assert!(validate(&bad).iter().any(|i| matches!(i, Issue::NoGround { .. })));
    }

    #[test]
    fn floating_and_duplicates() {
        let n = parse("* t\nr1 a 0 1k\nr1 a 0 1k\nr2 a dangling 1k\n").unwrap();
        let issues = validate(&n);
        assert!(issues.contains(&Issue::DuplicateDevice { name: "r1".into() }));
        assert!(issues.contains(&Issue::FloatingNode { node: "dangling".into() }));
    }

    #[test]
    fn ports_are_not_floating() {
        let n = parse("* t\n.subckt buf inp out\nr1 inp out 1k\nr2 out 0 1k\n.ends\n").unwrap();
        assert!(validate(&n).is_empty());
    }

    #[test]
    fn unresolved_symbols_only_in_numeric_mode() {
        let n = parse("* t\nr1 a 0 {r}\nr2 a 0 1k\n").unwrap();
        assert!(validate(&n).is_empty());
        assert_eq!(validate_numeric(&n), vec![Issue::UnresolvedSymbols { symbols: vec!["r".into()] }]);
    }

    #[test]
    fn node_count_mismatch_reported() {
        let mut n = parse("* t\nm1 d g 0 0 nfet\nr1 d 0 1k\nr2 g 0 1k\n").unwrap();
        n.devices[0].nodes.pop();
        assert!(validate(&n).iter().any(|i| matches!(
            i,
            Issue::NodeCountMismatch { expected: 4, found: 3, .. }
        )));
    }

    #[test]
    fn instance_port_count_checked() {
        let n = parse("* t\n.subckt buf a y\nr1 a y 1k\n.ends\nx1 in out 0 buf\nr1 in 0 1k\nr2 out 0 1k\n").unwrap();
        assert!(validate(&n).iter().any(|i| matches!(i, Issue::NodeCountMismatch { expected: 2, found: 3, .. })));
    }
}
