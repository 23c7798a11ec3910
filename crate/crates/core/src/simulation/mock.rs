//! Analytic op-amp model.
//!
//! Devices follow a square-law model with a weak-inversion floor on the
//! overdrive; small-signal gain, bandwidth and phase come from textbook
//! single-stage and Miller two-stage closed forms. The circuit structure is
//! read off the netlist: input pair, cascode chains, mirror load, optional
//! common-source second stage, Miller capacitor with optional series
//! resistor, and ideal bias current sources.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use super::{Analysis, Capabilities, SimBackend, SimError, TestbenchSuite};
use crate::netlist::{DeviceKind, Netlist, GROUND};
use crate::spec::{Metric, PerformanceReport, SimStatus};

pub const KP_N: f64 = 270e-6;
pub const KP_P: f64 = 90e-6;
/// Channel-length modulation for a 1 µm device, scaled by 1/L.
pub const LAMBDA_UM: f64 = 0.08;
/// Slope factor times thermal voltage; `2·N_VT` floors the overdrive.
pub const N_VT: f64 = 1.4 * 0.02585;
/// Gate oxide capacitance per area, F/m².
pub const COX: f64 = 8.5e-3;
/// Output conductance per ampere of an ideal bias current source.
pub const SOURCE_LAMBDA: f64 = 0.08;
/// Feedback capacitance assumed when a two-stage circuit has no Miller capacitor.
pub const PARASITIC_CC: f64 = 1e-15;

/// Supply-rejection coefficient: PSRR = A0 − 20·log10(PSR_BASE·(1+ρ)).
const PSR_BASE: f64 = 10.0;
/// Common-mode rejection over first-stage gain, dB.
const CMRR_OFFSET_DB: f64 = 6.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    N,
    P,
}

impl Polarity {
    pub fn from_model(model: &str) -> Self {
        let m = model.to_ascii_lowercase();
        if m.contains("pfet") || m.contains("pmos") || m.starts_with('p') {
            Polarity::P
        } else {
            Polarity::N
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceOp {
    pub id: f64,
    pub gm: f64,
    pub ro: f64,
    pub vov: f64,
    pub cgs: f64,
}

fn positive(name: &str, v: f64) -> Result<f64, SimError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(SimError::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Operating point of one transistor carrying drain current `id`.
pub fn device_op(pol: Polarity, w: f64, l: f64, id: f64) -> Result<DeviceOp, SimError> {
    positive("w", w)?;
    positive("l", l)?;
    positive("drain current", id)?;
    let kp = match pol {
        Polarity::N => KP_N,
        Polarity::P => KP_P,
    };
    let vov = (2.0 * id / (kp * w / l)).sqrt() + 2.0 * N_VT;
    Ok(DeviceOp {
        id,
        gm: 2.0 * id / vov,
        ro: 1.0 / ((LAMBDA_UM / (l * 1e6)) * id),
        vov,
        cgs: 2.0 / 3.0 * COX * w * l,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondStage {
    pub gm2: f64,
    pub r2: f64,
    pub cc: f64,
    /// Series nulling resistance; 0 when absent.
    pub rz: f64,
}

/// Small-signal summary that fully determines the mock's metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSignal {
    pub gm1: f64,
    /// Output resistance of the first stage.
    pub r1: f64,
    pub second: Option<SecondStage>,
    /// Total capacitance at the output node.
    pub cl: f64,
    /// Non-dominant parasitic poles, Hz.
    pub extra_poles: Vec<f64>,
    pub supply: f64,
    /// Current drawn from the positive supply.
    pub supply_current: f64,
    /// Second-stage to tail current ratio; 0 for single-stage circuits.
    pub rho: f64,
}

fn db(x: f64) -> f64 {
    20.0 * x.log10()
}

/// All seven metrics from the closed forms.
pub fn small_signal_report(s: &SmallSignal) -> Result<BTreeMap<Metric, f64>, SimError> {
    positive("gm1", s.gm1)?;
    positive("r1", s.r1)?;
    positive("cl", s.cl)?;
    positive("supply", s.supply)?;
    if !(s.supply_current >= 0.0) || !(s.rho >= 0.0) {
        return Err(SimError::Domain("supply current and rho must be non-negative".into()));
    }
    for p in &s.extra_poles {
        positive("pole", *p)?;
    }
    let a1 = s.gm1 * s.r1;
    let (a0, gbw, mut pm) = match &s.second {
        None => {
            let gbw = s.gm1 / (2.0 * PI * s.cl);
            (a1, gbw, 90.0)
        }
        Some(st) => {
            positive("gm2", st.gm2)?;
            positive("r2", st.r2)?;
            positive("cc", st.cc)?;
            if !(st.rz >= 0.0 && st.rz.is_finite()) {
                return Err(SimError::Domain(format!("rz must be non-negative, got {}", st.rz)));
            }
            let gbw = s.gm1 / (2.0 * PI * st.cc);
            let p2 = st.gm2 / (2.0 * PI * s.cl);
            let mut pm = 90.0 - (gbw / p2).atan().to_degrees();
            let d = 1.0 / st.gm2 - st.rz;
            // the zero moves to infinity when rz = 1/gm2; its sign sets the half plane
            if d.abs() > 1e-12 / st.gm2 {
                let fz = 1.0 / (2.0 * PI * st.cc * d);
                pm -= (gbw / fz).atan().to_degrees();
            }
            (a1 * st.gm2 * st.r2, gbw, pm)
        }
    };
    for p in &s.extra_poles {
        pm -= (gbw / p).atan().to_degrees();
    }
    let gain = db(a0);
    let first = if s.second.is_some() { db(a1) } else { gain };
    let mut out = BTreeMap::new();
    out.insert(Metric::Gain, gain);
    out.insert(Metric::Gbw, gbw);
    out.insert(Metric::Pm, pm);
    out.insert(Metric::Cmrr, first + CMRR_OFFSET_DB);
    out.insert(Metric::Psrr, gain - db(PSR_BASE * (1.0 + s.rho)));
    out.insert(Metric::Psrn, gain - db(PSR_BASE * (1.0 + 1.0 / (1.0 + s.rho))));
    out.insert(Metric::Power, s.supply * s.supply_current * 1e6);
    Ok(out)
}

#[derive(Debug, Clone)]
struct Mos {
    name: String,
    pol: Polarity,
    d: String,
    g: String,
    s: String,
    w: f64,
    l: f64,
}

#[derive(Debug, Clone)]
struct Src {
    p: String,
    n: String,
    /// Flows from `p` through the source to `n`.
    i: f64,
}

#[derive(Debug, Clone)]
struct TwoTerm {
    a: String,
    b: String,
    value: f64,
}

struct Circuit {
    mos: Vec<Mos>,
    srcs: Vec<Src>,
    caps: Vec<TwoTerm>,
    res: Vec<TwoTerm>,
}

fn is_rail(n: &str) -> bool {
    n == "vdd" || n == "vss" || n == GROUND
}

fn num(netlist: &Netlist, dev: &str, key: &str, v: Option<&crate::netlist::Value>) -> Result<f64, SimError> {
    let v = v.ok_or_else(|| SimError::Unsupported(format!("{dev} has no `{key}` value")))?;
    netlist
        .resolve(v)
        .ok_or_else(|| SimError::Unbound(vec![v.as_sym().unwrap_or_default().to_string()]))
}

fn extract(netlist: &Netlist) -> Result<Circuit, SimError> {
    let mut c = Circuit { mos: vec![], srcs: vec![], caps: vec![], res: vec![] };
    for d in &netlist.devices {
        match d.kind {
            DeviceKind::Mosfet => {
                let model = d.model.as_deref().unwrap_or("");
                let m = match d.params.get("m") {
                    Some(v) => num(netlist, &d.name, "m", Some(v))?,
                    None => 1.0,
                };
                let w = num(netlist, &d.name, "w", d.params.get("w"))?;
                let l = num(netlist, &d.name, "l", d.params.get("l"))?;
                positive(&format!("{}.w", d.name), w)?;
                positive(&format!("{}.l", d.name), l)?;
                c.mos.push(Mos {
                    name: d.name.clone(),
                    pol: Polarity::from_model(model),
                    d: d.nodes[0].clone(),
                    g: d.nodes[1].clone(),
                    s: d.nodes[2].clone(),
                    w: w * m,
                    l,
                });
            }
            DeviceKind::Isource => {
                let i = num(netlist, &d.name, "dc", d.params.get("dc"))?;
                let (p, n) = (d.nodes[0].clone(), d.nodes[1].clone());
                let src = if i >= 0.0 { Src { p, n, i } } else { Src { p: n, n: p, i: -i } };
                c.srcs.push(src);
            }
            DeviceKind::Capacitor => c.caps.push(TwoTerm {
                a: d.nodes[0].clone(),
                b: d.nodes[1].clone(),
                value: num(netlist, &d.name, "value", d.value())?,
            }),
            DeviceKind::Resistor => c.res.push(TwoTerm {
                a: d.nodes[0].clone(),
                b: d.nodes[1].clone(),
                value: num(netlist, &d.name, "value", d.value())?,
            }),
            DeviceKind::Vsource => {}
            DeviceKind::SubcktInstance => {
                return Err(SimError::Unsupported("subcircuit instances are not modeled".into()));
            }
        }
    }
    Ok(c)
}

/// Net current flowing into `node` through device `m` per ampere of its drain current.
fn coef(m: &Mos, node: &str) -> f64 {
    if m.d == m.s {
        return 0.0;
    }
    let sign = match m.pol {
        Polarity::N => 1.0,
        Polarity::P => -1.0,
    };
    if m.d == node {
        -sign
    } else if m.s == node {
        sign
    } else {
        0.0
    }
}

fn src_inflow(srcs: &[Src], node: &str) -> f64 {
    srcs.iter()
        .map(|s| {
            if s.p == node {
                -s.i
            } else if s.n == node {
                s.i
            } else {
                0.0
            }
        })
        .sum()
}

fn par(rs: impl IntoIterator<Item = f64>) -> f64 {
    let g: f64 = rs.into_iter().map(|r| 1.0 / r).sum();
    if g > 0.0 {
        1.0 / g
    } else {
        f64::INFINITY
    }
}

enum Bias {
    Ok(SmallSignal),
    Off(String),
}

struct Solved<'a> {
    c: &'a Circuit,
    ops: Vec<DeviceOp>,
    tail: String,
}

impl Solved<'_> {
    fn src_r(&self, node: &str) -> Vec<f64> {
        self.c
            .srcs
            .iter()
            .filter(|s| (s.p == node || s.n == node) && !(is_rail(&s.p) && is_rail(&s.n)))
            .map(|s| 1.0 / (SOURCE_LAMBDA * s.i))
            .collect()
    }

    /// Resistance seen looking into the drain of device `k`.
    fn r_into(&self, k: usize, depth: usize) -> f64 {
        let m = &self.c.mos[k];
        let ro = self.ops[k].ro;
        if is_rail(&m.s) || m.s == self.tail || depth > 8 {
            return ro;
        }
        let rs = self.r_node(&m.s, Some(k), depth + 1);
        ro + rs + self.ops[k].gm * ro * rs
    }

    /// Resistance to AC ground at `node` through device drains and bias sources.
    fn r_node(&self, node: &str, exclude: Option<usize>, depth: usize) -> f64 {
        let mut rs = self.src_r(node);
        for (k, m) in self.c.mos.iter().enumerate() {
            if Some(k) != exclude && m.d == node && m.s != node {
                rs.push(self.r_into(k, depth));
            }
        }
        par(rs)
    }
}

fn analyze(netlist: &Netlist, suite: &TestbenchSuite) -> Result<Bias, SimError> {
    let c = extract(netlist)?;
    let find_gate = |g: &str| -> Result<usize, SimError> {
        let hits: Vec<usize> = c.mos.iter().enumerate().filter(|(_, m)| m.g == g).map(|(i, _)| i).collect();
        match hits.as_slice() {
            [one] => Ok(*one),
            _ => Err(SimError::Unsupported(format!("expected one transistor gated by `{g}`, found {}", hits.len()))),
        }
    };
    let ip = find_gate("inp")?;
    let inn = find_gate("inn")?;
    let tail = c.mos[ip].s.clone();
    if c.mos[inn].s != tail || c.mos[ip].pol != c.mos[inn].pol || is_rail(&tail) {
        return Err(SimError::Unsupported("input transistors do not form a source-coupled pair".into()));
    }
    if c.mos.iter().enumerate().any(|(k, m)| k != ip && k != inn && (m.d == tail || m.s == tail)) {
        return Err(SimError::Unsupported("tail must be biased by a current source".into()));
    }
    let i_tail = src_inflow(&c.srcs, &tail).abs();
    if i_tail <= 0.0 {
        return Ok(Bias::Off("no tail current".into()));
    }

    // bias currents by repeated KCL on nodes with a single unknown transistor
    let mut current: Vec<Option<f64>> = vec![None; c.mos.len()];
    current[ip] = Some(i_tail / 2.0);
    current[inn] = Some(i_tail / 2.0);
    for (k, m) in c.mos.iter().enumerate() {
        if m.d == m.s {
            current[k] = Some(0.0);
        }
    }
    let nodes: BTreeSet<String> = c
        .mos
        .iter()
        .flat_map(|m| [m.d.clone(), m.s.clone()])
        .chain(c.srcs.iter().flat_map(|s| [s.p.clone(), s.n.clone()]))
        .filter(|n| !is_rail(n) && *n != tail)
        .collect();
    loop {
        let mut progress = false;
        for node in &nodes {
            let mut known = src_inflow(&c.srcs, node);
            let mut unknown = Vec::new();
            for (k, m) in c.mos.iter().enumerate() {
                let a = coef(m, node);
                if a == 0.0 {
                    continue;
                }
                match current[k] {
                    Some(i) => known += a * i,
                    None => unknown.push((k, a)),
                }
            }
            if let [(k, a)] = unknown.as_slice() {
                let i = -known / a;
                if !(i > 1e-15) {
                    return Ok(Bias::Off(format!("{} carries no current", c.mos[*k].name)));
                }
                current[*k] = Some(i);
                progress = true;
            }
        }
        if !progress {
            break;
        }
    }
    let unresolved: Vec<&str> =
        c.mos.iter().zip(&current).filter(|(_, i)| i.is_none()).map(|(m, _)| m.name.as_str()).collect();
    if !unresolved.is_empty() {
        return Err(SimError::Unsupported(format!("cannot determine bias current of {}", unresolved.join(", "))));
    }
    let mut ops = Vec::with_capacity(c.mos.len());
    for (m, i) in c.mos.iter().zip(&current) {
        let i = i.expect("all currents resolved");
        if i == 0.0 {
            // shorted device: contributes nothing
            ops.push(DeviceOp { id: 0.0, gm: 0.0, ro: f64::INFINITY, vov: 0.0, cgs: 2.0 / 3.0 * COX * m.w * m.l });
        } else {
            ops.push(device_op(m.pol, m.w, m.l, i)?);
        }
    }

    // first-stage branches: cascode chain up from each input drain, then down through the load
    let follow = |start: usize| -> (String, BTreeSet<String>) {
        let mut node = c.mos[start].d.clone();
        let mut set = BTreeSet::from([node.clone()]);
        loop {
            let next: Vec<usize> = c
                .mos
                .iter()
                .enumerate()
                .filter(|(k, m)| *k != ip && *k != inn && m.s == node && m.d != node && m.g != node)
                .map(|(k, _)| k)
                .collect();
            match next.as_slice() {
                [k] if !set.contains(&c.mos[*k].d) && !is_rail(&c.mos[*k].d) => {
                    node = c.mos[*k].d.clone();
                    set.insert(node.clone());
                }
                _ => break,
            }
        }
        let end = node.clone();
        let mut frontier = vec![end.clone()];
        while let Some(n) = frontier.pop() {
            for (k, m) in c.mos.iter().enumerate() {
                if k != ip && k != inn && m.d == n && !is_rail(&m.s) && m.s != tail && set.insert(m.s.clone()) {
                    frontier.push(m.s.clone());
                }
            }
        }
        (end, set)
    };
    let (end_p, set_p) = follow(ip);
    let (end_n, set_n) = follow(inn);
    if end_p == end_n {
        return Err(SimError::Unsupported("input branches merge; fully differential loads are not modeled".into()));
    }
    let all: BTreeSet<&String> = set_p.iter().chain(set_n.iter()).collect();
    let is_reference = |end: &str| {
        c.mos
            .iter()
            .enumerate()
            .any(|(k, m)| k != ip && k != inn && m.g == end && (m.d == end || all.contains(&m.d)))
    };
    let (o1, reference, out_set, out_input) = match (is_reference(&end_p), is_reference(&end_n)) {
        (false, true) => (end_p.clone(), end_n.clone(), &set_p, ip),
        (true, false) => (end_n.clone(), end_p.clone(), &set_n, inn),
        _ => return Err(SimError::Unsupported("cannot identify the first-stage output".into())),
    };

    let solved = Solved { c: &c, ops: ops.clone(), tail: tail.clone() };
    let r1 = solved.r_node(&o1, None, 0);
    if !r1.is_finite() {
        return Err(SimError::Unsupported(format!("node {o1} has no DC path")));
    }
    let gm1 = ops[out_input].gm;

    let mut poles = Vec::new();
    let mirror_gates: Vec<usize> = c.mos.iter().enumerate().filter(|(_, m)| m.g == reference).map(|(k, _)| k).collect();
    let diode = mirror_gates
        .iter()
        .copied()
        .find(|k| c.mos[*k].d == reference)
        .or_else(|| mirror_gates.iter().copied().find(|k| all.contains(&c.mos[*k].d)));
    if let Some(dk) = diode {
        let cap: f64 = mirror_gates.iter().map(|k| ops[*k].cgs).sum();
        poles.push(ops[dk].gm / (2.0 * PI * cap));
    }
    for (k, m) in c.mos.iter().enumerate() {
        if k != ip && k != inn && out_set.contains(&m.s) && !is_rail(&m.s) && m.s != tail && ops[k].gm > 0.0 {
            poles.push(ops[k].gm / (2.0 * PI * ops[k].cgs));
        }
    }

    let out = "out";
    let load: f64 = c
        .caps
        .iter()
        .filter(|t| (t.a == out && is_rail(&t.b)) || (t.b == out && is_rail(&t.a)))
        .map(|t| t.value)
        .sum();
    let cl = suite.load_cap + load;
    if cl <= 0.0 {
        return Err(SimError::Domain("output load capacitance must be positive".into()));
    }

    let supply_current = {
        let mut leaving = -src_inflow(&c.srcs, "vdd");
        for (k, m) in c.mos.iter().enumerate() {
            leaving -= coef(m, "vdd") * current[k].unwrap_or(0.0);
        }
        leaving.abs()
    };

    let (second, rho) = if o1 == out {
        (None, 0.0)
    } else {
        let drivers: Vec<usize> =
            c.mos.iter().enumerate().filter(|(_, m)| m.g == o1 && m.d == out).map(|(k, _)| k).collect();
        let [k2] = drivers.as_slice() else {
            return Err(SimError::Unsupported(format!("expected one second-stage transistor driven by {o1}")));
        };
        let r2 = solved.r_node(out, None, 0);
        if !r2.is_finite() {
            return Err(SimError::Unsupported("output node has no DC path".into()));
        }
        let touches = |t: &TwoTerm, a: &str, b: &str| (t.a == a && t.b == b) || (t.a == b && t.b == a);
        let mut cc: f64 = c.caps.iter().filter(|t| touches(t, &o1, out)).map(|t| t.value).sum();
        let mut rz = 0.0;
        if cc == 0.0 {
            // series RC between the first-stage output and the output
            for cap in &c.caps {
                let mid = if cap.a == o1 || cap.a == out {
                    &cap.b
                } else if cap.b == o1 || cap.b == out {
                    &cap.a
                } else {
                    continue;
                };
                let far = if cap.a == *mid { &cap.b } else { &cap.a };
                let other = if far == &o1 { out } else { o1.as_str() };
                if let Some(r) = c.res.iter().find(|r| touches(r, mid, other)) {
                    cc = cap.value;
                    rz = r.value;
                    break;
                }
            }
        }
        if cc == 0.0 {
            cc = PARASITIC_CC;
        }
        (Some(SecondStage { gm2: ops[*k2].gm, r2, cc, rz }), current[*k2].unwrap_or(0.0) / i_tail)
    };

    Ok(Bias::Ok(SmallSignal {
        gm1,
        r1,
        second,
        cl,
        extra_poles: poles,
        supply: suite.supply,
        supply_current,
        rho,
    }))
}

/// Deterministic closed-form stand-in for a circuit simulator.
#[derive(Debug, Clone, Default)]
pub struct MockBackend;

impl MockBackend {
    pub fn new() -> Self {
        Self
    }

    /// The small-signal summary the mock derives from `netlist`.
    pub fn small_signal(&self, netlist: &Netlist, suite: &TestbenchSuite) -> Result<SmallSignal, SimError> {
        match analyze(netlist, suite)? {
            Bias::Ok(s) => Ok(s),
            Bias::Off(why) => Err(SimError::Domain(why)),
        }
    }
}

impl SimBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { analyses: Analysis::ALL.to_vec(), exact_determinism: true }
    }

    fn run(&self, netlist: &Netlist, suite: &TestbenchSuite) -> Result<PerformanceReport, SimError> {
        let s = match analyze(netlist, suite)? {
            Bias::Ok(s) => s,
            Bias::Off(why) => {
                log::debug!("mock operating point failed: {why}");
                return Ok(PerformanceReport::failed(SimStatus::SimFailed));
            }
        };
        let all = small_signal_report(&s)?;
        let wanted = suite.metrics();
        let values: Vec<(Metric, f64)> = all.into_iter().filter(|(m, _)| wanted.contains(m)).collect();
        if values.iter().any(|(_, v)| !v.is_finite()) {
            return Ok(PerformanceReport::failed(SimStatus::SimFailed));
        }
        PerformanceReport::ok(values).map_err(|e| SimError::Domain(e.to_string()))
    }
}
