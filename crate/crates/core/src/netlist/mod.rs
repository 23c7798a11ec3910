//! Structured SPICE netlists with `{name}` parameter placeholders.
//!
//! The supported dialect is a small subset of ngspice: MOSFETs, resistors,
//! capacitors, independent sources, subcircuit instances, `.subckt/.ends`,
//! `.param`, `.include`, `+` continuations and `*`/`;` comments. Anything
//! else is rejected with [`NetlistError::UnsupportedCard`].
//!
//! A netlist either holds top-level device cards, or wraps its devices in a
//! single cell `.subckt` whose header lists the external ports. Helper
//! subcircuits referenced by `X` instances may precede the cell.

mod edit;
mod parse;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use edit::{apply_edit, EditOp};
pub use parse::{parse, parse_value};
pub use validate::{validate, validate_numeric, Issue};

use crate::spec::Assignment;

/// The ground node. `gnd` and `gnd!` are normalized to it at parse time.
pub const GROUND: &str = "0";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetlistError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: unsupported card `{card}`")]
    UnsupportedCard { line: usize, card: String },
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("device `{device}` has no terminal {terminal}")]
    BadTerminal { device: String, terminal: usize },
    #[error("invalid device: {0}")]
    InvalidDevice(String),
    #[error("missing values for symbols: {}", .0.join(", "))]
    MissingSymbols(Vec<String>),
}

/// A device parameter: a number or an unresolved `{name}` placeholder.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Sym(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Sym(_) => None,
        }
    }

    pub fn as_sym(&self) -> Option<&str> {
        match self {
            Value::Sym(s) => Some(s),
            Value::Num(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Debug formatting of f64 is the shortest string that parses back exactly.
            Value::Num(v) => write!(f, "{v:?}"),
            Value::Sym(s) => write!(f, "{{{s}}}"),
        }
    }
}

// JSON form: numbers stay numbers; placeholders and suffixed values are strings.
impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Num(v) => s.serialize_f64(*v),
            Value::Sym(_) => s.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(Value::Num)
                .ok_or_else(|| serde::de::Error::custom("invalid number")),
            serde_json::Value::String(s) => parse_value(&s).map_err(serde::de::Error::custom),
            other => Err(serde::de::Error::custom(format!("expected number or string, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviceKind {
    Mosfet,
    Resistor,
    Capacitor,
    Vsource,
    Isource,
    SubcktInstance,
}

impl DeviceKind {
    pub fn from_prefix(c: char) -> Option<Self> {
        match c.to_ascii_lowercase() {
            'm' => Some(DeviceKind::Mosfet),
            'r' => Some(DeviceKind::Resistor),
            'c' => Some(DeviceKind::Capacitor),
            'v' => Some(DeviceKind::Vsource),
            'i' => Some(DeviceKind::Isource),
            'x' => Some(DeviceKind::SubcktInstance),
            _ => None,
        }
    }

    pub fn prefix(self) -> char {
        match self {
            DeviceKind::Mosfet => 'm',
            DeviceKind::Resistor => 'r',
            DeviceKind::Capacitor => 'c',
            DeviceKind::Vsource => 'v',
            DeviceKind::Isource => 'i',
            DeviceKind::SubcktInstance => 'x',
        }
    }

    /// Required terminal count; `None` for subcircuit instances.
    pub fn terminal_count(self) -> Option<usize> {
        match self {
            DeviceKind::Mosfet => Some(4),
            DeviceKind::SubcktInstance => None,
            _ => Some(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DeviceRepr")]
pub struct Device {
    pub name: String,
    pub kind: DeviceKind,
    pub nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct DeviceRepr {
    name: String,
    #[serde(default)]
    kind: Option<DeviceKind>,
    nodes: Vec<String>,
    #[serde(default)]
    model: Option<String>,
    #[serde(default)]
    params: BTreeMap<String, Value>,
}

impl TryFrom<DeviceRepr> for Device {
    type Error = NetlistError;

    fn try_from(r: DeviceRepr) -> Result<Self, Self::Error> {
        let name = r.name.to_ascii_lowercase();
        let inferred = name
            .chars()
            .next()
            .and_then(DeviceKind::from_prefix)
            .ok_or_else(|| NetlistError::InvalidDevice(format!("bad device name `{name}`")))?;
        let kind = r.kind.unwrap_or(inferred);
        let mut dev = Device::new(name, kind, r.nodes)?;
        dev.model = r.model.map(|m| m.to_ascii_lowercase());
        dev.params = r.params.into_iter().map(|(k, v)| (k.to_ascii_lowercase(), v)).collect();
        Ok(dev)
    }
}

impl Device {
    /// Create a device; the name's first letter must match its kind.
    pub fn new(name: impl Into<String>, kind: DeviceKind, nodes: Vec<String>) -> Result<Self, NetlistError> {
        let name = name.into().to_ascii_lowercase();
        if name.chars().next() != Some(kind.prefix()) {
            return Err(NetlistError::InvalidDevice(format!(
                "device `{name}` must start with `{}` for kind {kind:?}",
                kind.prefix()
            )));
        }
        if name.chars().any(|c| c.is_whitespace() || c == '=' || c == '{' || c == '}') {
            return Err(NetlistError::InvalidDevice(format!("bad device name `{name}`")));
        }
        let nodes = nodes.into_iter().map(|n| normalize_node(&n)).collect();
        Ok(Self { name, kind, nodes, model: None, params: BTreeMap::new() })
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into().to_ascii_lowercase());
        self
    }

    pub fn with_param(mut self, key: impl Into<String>, value: Value) -> Self {
        self.params.insert(key.into().to_ascii_lowercase(), value);
        self
    }

    /// The positional value of a resistor or capacitor.
    pub fn value(&self) -> Option<&Value> {
        self.params.get("value")
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.params.values().filter_map(Value::as_sym)
    }
}

pub(crate) fn normalize_node(n: &str) -> String {
    let n = n.to_ascii_lowercase();
    match n.as_str() {
        "gnd" | "gnd!" => GROUND.to_string(),
        _ => n,
    }
}

/// A helper subcircuit definition referenced by `X` instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcktDef {
    pub name: String,
    pub ports: Vec<String>,
    pub devices: Vec<Device>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Netlist {
    pub title: String,
    /// Name of the wrapping `.subckt`, when the netlist is a cell with ports.
    pub cell: Option<String>,
    pub ports: Vec<String>,
    pub devices: Vec<Device>,
    pub includes: Vec<String>,
    /// Numeric `.param` definitions; placeholders naming them are resolved.
    pub params: BTreeMap<String, f64>,
    pub subckts: Vec<SubcktDef>,
}

impl Netlist {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), ..Self::default() }
    }

    /// Make this netlist a cell with the given external ports.
    pub fn with_cell(mut self, name: impl Into<String>, ports: &[&str]) -> Self {
        self.cell = Some(name.into().to_ascii_lowercase());
        self.ports = ports.iter().map(|p| normalize_node(p)).collect();
        self
    }

    pub fn with_device(mut self, device: Device) -> Self {
        self.devices.push(device);
        self
    }

    pub fn device(&self, name: &str) -> Option<&Device> {
        let name = name.to_ascii_lowercase();
        self.devices.iter().find(|d| d.name == name)
    }

    pub fn device_mut(&mut self, name: &str) -> Option<&mut Device> {
        let name = name.to_ascii_lowercase();
        self.devices.iter_mut().find(|d| d.name == name)
    }

    /// Unresolved placeholders: every `{name}` referenced by a device
    /// parameter that is not defined by `.param`.
    pub fn symbols(&self) -> BTreeSet<String> {
        self.devices
            .iter()
            .flat_map(Device::symbols)
            .filter(|s| !self.params.contains_key(*s))
            .map(str::to_string)
            .collect()
    }

    /// All nodes touched by devices, plus ports.
    pub fn nodes(&self) -> BTreeSet<String> {
        self.devices
            .iter()
            .flat_map(|d| d.nodes.iter().cloned())
            .chain(self.ports.iter().cloned())
            .collect()
    }

    pub fn has_node(&self, node: &str) -> bool {
        let node = normalize_node(node);
        self.ports.contains(&node) || self.devices.iter().any(|d| d.nodes.contains(&node))
    }

    /// Numeric value of a parameter, resolving `.param` definitions.
    pub fn resolve(&self, value: &Value) -> Option<f64> {
        match value {
            Value::Num(v) => Some(*v),
            Value::Sym(s) => self.params.get(s).copied(),
        }
    }

    pub fn subckt(&self, name: &str) -> Option<&SubcktDef> {
        self.subckts.iter().find(|s| s.name == name)
    }

    /// Canonical text form; `parse(&n.serialize())` reproduces `n`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let title = self.title.trim();
        if title.is_empty() {
            out.push_str("*\n");
        } else {
            let _ = writeln!(out, "* {title}");
        }
        for inc in &self.includes {
            let _ = writeln!(out, ".include \"{inc}\"");
        }
        for (k, v) in &self.params {
            let _ = writeln!(out, ".param {k}={}", Value::Num(*v));
        }
        for def in &self.subckts {
            write_subckt(&mut out, &def.name, &def.ports, &def.devices);
        }
        match &self.cell {
            Some(cell) => write_subckt(&mut out, cell, &self.ports, &self.devices),
            None => {
                for d in &self.devices {
                    let _ = writeln!(out, "{}", device_card(d));
                }
            }
        }
        out.push_str(".end\n");
        out
    }

    /// Replace every placeholder with its assigned value.
    pub fn bind(&self, assignment: &Assignment) -> Result<Netlist, NetlistError> {
        bind_parameters(self, assignment)
    }
}

fn write_subckt(out: &mut String, name: &str, ports: &[String], devices: &[Device]) {
    let _ = write!(out, ".subckt {name}");
    for p in ports {
        let _ = write!(out, " {p}");
    }
    out.push('\n');
    for d in devices {
        let _ = writeln!(out, "{}", device_card(d));
    }
    let _ = writeln!(out, ".ends {name}");
}

/// One-line SPICE card for a device.
pub fn device_card(d: &Device) -> String {
    let mut card = d.name.clone();
    for n in &d.nodes {
        card.push(' ');
        card.push_str(n);
    }
    let mut rest: Vec<(&String, &Value)> = Vec::new();
    match d.kind {
        DeviceKind::Mosfet | DeviceKind::SubcktInstance => {
            if let Some(m) = &d.model {
                card.push(' ');
                card.push_str(m);
            }
            rest.extend(d.params.iter());
        }
        DeviceKind::Resistor | DeviceKind::Capacitor => {
            if let Some(v) = d.params.get("value") {
                let _ = write!(card, " {v}");
            }
            rest.extend(d.params.iter().filter(|(k, _)| k.as_str() != "value"));
        }
        DeviceKind::Vsource | DeviceKind::Isource => {
            if let Some(v) = d.params.get("dc") {
                let _ = write!(card, " dc {v}");
            }
            if let Some(v) = d.params.get("ac") {
                let _ = write!(card, " ac {v}");
                if let Some(p) = d.params.get("acphase") {
                    let _ = write!(card, " {p}");
                }
            }
            rest.extend(
                d.params
                    .iter()
                    .filter(|(k, _)| match k.as_str() {
                        "dc" | "ac" => false,
                        "acphase" => !d.params.contains_key("ac"),
                        _ => true,
                    }),
            );
        }
    }
    for (k, v) in rest {
        let _ = write!(card, " {k}={v}");
    }
    card
}

/// Substitute numeric values for all placeholders.
pub fn bind_parameters(n: &Netlist, assignment: &Assignment) -> Result<Netlist, NetlistError> {
    let missing: Vec<String> = n
        .symbols()
        .into_iter()
        .filter(|s| !assignment.contains_key(s))
        .collect();
    if !missing.is_empty() {
        return Err(NetlistError::MissingSymbols(missing));
    }
    let mut out = n.clone();
    for d in &mut out.devices {
        for v in d.params.values_mut() {
            if let Value::Sym(s) = v {
                if let Some(&x) = assignment.get(s.as_str()) {
                    *v = Value::Num(x);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_netlist_serializes_to_title_and_end() {
        let n = Netlist::new("empty");
        assert_eq!(n.serialize(), "* empty\n.end\n");
    }

    #[test]
    fn mosfet_nodes_serialize_in_stored_order() {
        let m = Device::new("M1", DeviceKind::Mosfet, vec!["d".into(), "g".into(), "s".into(), "b".into()])
            .unwrap()
            .with_model("nfet")
            .with_param("w", Value::Sym("w1".into()));
        assert_eq!(device_card(&m), "m1 d g s b nfet w={w1}");
    }

    #[test]
    fn device_prefix_must_match_kind() {
        assert!(Device::new("q1", DeviceKind::Resistor, vec![]).is_err());
    }

    #[test]
    fn bind_replaces_all_symbols() {
        let n = parse("* t\nm1 out in 0 0 nfet w={w1} l={l1}\nr1 out 0 {rl}\n").unwrap();
        assert_eq!(n.symbols().len(), 3);
        let a: Assignment = [("w1", 1e-6), ("l1", 2e-7), ("rl", 1e3)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let b = bind_parameters(&n, &a).unwrap();
        assert!(b.symbols().is_empty());
        assert_eq!(b.device("r1").unwrap().value(), Some(&Value::Num(1e3)));
        assert!(validate_numeric(&b).iter().all(|i| !matches!(i, Issue::UnresolvedSymbols { .. })));
    }

    #[test]
    fn partial_bind_names_missing_symbols() {
        let n = parse("* t\nm1 out in 0 0 nfet w={w1} l={l1}\n").unwrap();
        let a: Assignment = [("w1".to_string(), 1e-6)].into_iter().collect();
        assert_eq!(bind_parameters(&n, &a).unwrap_err(), NetlistError::MissingSymbols(vec!["l1".into()]));
    }

    #[test]
    fn param_definitions_resolve_placeholders() {
        let n = parse("* t\n.param vdd=1.8\nv1 a 0 dc {vdd}\nr1 a 0 1k\n").unwrap();
        assert!(n.symbols().is_empty());
        assert_eq!(n.resolve(n.device("v1").unwrap().params.get("dc").unwrap()), Some(1.8));
    }

    #[test]
    fn value_json_forms() {
        let v: Value = serde_json::from_str("\"{rz}\"").unwrap();
        assert_eq!(v, Value::Sym("rz".into()));
        let v: Value = serde_json::from_str("\"2u\"").unwrap();
        assert_eq!(v, Value::Num(2e-6));
        let v: Value = serde_json::from_str("1e3").unwrap();
        assert_eq!(v, Value::Num(1e3));
    }
}
