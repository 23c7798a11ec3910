//! Domain types shared across the design loop: metric targets, task
//! specifications, simulated performance reports and parameter spaces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Performance metrics of an op-amp, in canonical units.
///
/// | metric | unit |
/// |--------|------|
/// | `power` | µW |
/// | `gain`, `cmrr`, `psrr`, `psrn` | dB |
/// | `gbw` | Hz |
/// | `pm` | degrees |
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Power,
    Gain,
    Cmrr,
    Psrr,
    Gbw,
    Pm,
    Psrn,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Power,
        Metric::Gain,
        Metric::Cmrr,
        Metric::Psrr,
        Metric::Gbw,
        Metric::Pm,
        Metric::Psrn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Power => "power",
            Metric::Gain => "gain",
            Metric::Cmrr => "cmrr",
            Metric::Psrr => "psrr",
            Metric::Gbw => "gbw",
            Metric::Pm => "pm",
            Metric::Psrn => "psrn",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Metric::Power => "uW",
            Metric::Gain | Metric::Cmrr | Metric::Psrr | Metric::Psrn => "dB",
            Metric::Gbw => "Hz",
            Metric::Pm => "deg",
        }
    }

    /// Human-facing label used in prompts and tables.
    pub fn label(self) -> &'static str {
        match self {
            Metric::Power => "Power",
            Metric::Gain => "Gain",
            Metric::Cmrr => "CMRR",
            Metric::Psrr => "PSRR",
            Metric::Gbw => "GBW",
            Metric::Pm => "PM",
            Metric::Psrn => "PSRN",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| SpecError::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    AtLeast,
    AtMost,
}

impl Direction {
    pub fn symbol(self) -> &'static str {
        match self {
            Direction::AtLeast => ">=",
            Direction::AtMost => "<=",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("threshold for {0} is not finite")]
    NonFiniteThreshold(Metric),
    #[error("duplicate target for metric {0}")]
    DuplicateMetric(Metric),
    #[error("specification `{0}` has no targets")]
    Empty(String),
    #[error("parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("report value for {0} is not finite")]
    NonFiniteValue(Metric),
}

/// One requirement of a design task, e.g. `gain >= 70 dB`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecTarget {
    pub metric: Metric,
    pub direction: Direction,
    pub threshold: f64,
}

impl SpecTarget {
    pub fn at_least(metric: Metric, threshold: f64) -> Self {
        Self { metric, direction: Direction::AtLeast, threshold }
    }

    pub fn at_most(metric: Metric, threshold: f64) -> Self {
        Self { metric, direction: Direction::AtMost, threshold }
    }

    pub fn holds(&self, value: f64) -> bool {
        match self.direction {
            Direction::AtLeast => value >= self.threshold,
            Direction::AtMost => value <= self.threshold,
        }
    }

    /// Signed headroom normalized by `|threshold|`; non-negative iff the target holds.
    pub fn margin(&self, value: f64) -> f64 {
        let scale = self.threshold.abs();
        let scale = if scale > 0.0 { scale } else { 1.0 };
        match self.direction {
            Direction::AtLeast => (value - self.threshold) / scale,
            Direction::AtMost => (self.threshold - value) / scale,
        }
    }
}

impl fmt::Display for SpecTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            self.metric.label(),
            self.direction.symbol(),
            self.threshold,
            self.metric.unit()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Easy,
    Medium,
    Hard,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Easy => "easy",
            Level::Medium => "medium",
            Level::Hard => "hard",
        })
    }
}

/// A design task: the set of targets a design must meet to pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecificationRepr", into = "SpecificationRepr")]
pub struct Specification {
    task_id: String,
    level: Level,
    targets: BTreeMap<Metric, SpecTarget>,
}

#[derive(Serialize, Deserialize)]
struct SpecificationRepr {
    task_id: String,
    level: Level,
    targets: Vec<SpecTarget>,
}

impl TryFrom<SpecificationRepr> for Specification {
    type Error = SpecError;

    fn try_from(repr: SpecificationRepr) -> Result<Self, Self::Error> {
        Specification::new(repr.task_id, repr.level, repr.targets)
    }
}

impl From<Specification> for SpecificationRepr {
    fn from(spec: Specification) -> Self {
        SpecificationRepr {
            task_id: spec.task_id,
            level: spec.level,
            targets: spec.targets.into_values().collect(),
        }
    }
}

impl Specification {
    pub fn new(
        task_id: impl Into<String>,
        level: Level,
        targets: impl IntoIterator<Item = SpecTarget>,
    ) -> Result<Self, SpecError> {
        let task_id = task_id.into();
        let mut map = BTreeMap::new();
        for t in targets {
            if !t.threshold.is_finite() {
                return Err(SpecError::NonFiniteThreshold(t.metric));
            }
            if map.insert(t.metric, t).is_some() {
                return Err(SpecError::DuplicateMetric(t.metric));
            }
        }
        if map.is_empty() {
            return Err(SpecError::Empty(task_id));
        }
        Ok(Self { task_id, level, targets: map })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn level(&self) -> Level {
        self.level
    }

    /// Targets in canonical metric order.
    pub fn targets(&self) -> impl Iterator<Item = &SpecTarget> {
        self.targets.values()
    }

    pub fn target(&self, metric: Metric) -> Option<&SpecTarget> {
        self.targets.get(&metric)
    }

    pub fn metrics(&self) -> impl Iterator<Item = Metric> + '_ {
        self.targets.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn with_task_id(mut self, task_id: impl Into<String>) -> Self {
        self.task_id = task_id.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimStatus {
    Ok,
    SimFailed,
    NonConvergent,
}

/// Simulated metric values in canonical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub values: BTreeMap<Metric, f64>,
    pub status: SimStatus,
}

impl PerformanceReport {
    pub fn ok(values: impl IntoIterator<Item = (Metric, f64)>) -> Result<Self, SpecError> {
        Self::with_status(values, SimStatus::Ok)
    }

    pub fn with_status(
        values: impl IntoIterator<Item = (Metric, f64)>,
        status: SimStatus,
    ) -> Result<Self, SpecError> {
        let values: BTreeMap<_, _> = values.into_iter().collect();
        if let Some((m, _)) = values.iter().find(|(_, v)| !v.is_finite()) {
            return Err(SpecError::NonFiniteValue(*m));
        }
        Ok(Self { values, status })
    }

    pub fn failed(status: SimStatus) -> Self {
        Self { values: BTreeMap::new(), status }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.values.get(&metric).copied()
    }

    pub fn is_ok(&self) -> bool {
        self.status == SimStatus::Ok
    }
}

/// Trial outcomes for one task: `n` trials, `c` correct, Pass@`k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub n: u32,
    pub c: u32,
    pub k: u32,
    /// Iterations used by each passing trial.
    pub iterations_per_pass: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBound {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
    #[serde(default)]
    pub unit: String,
}

impl ParamBound {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, scale: Scale, unit: impl Into<String>) -> Self {
        Self { name: name.into(), lower, upper, scale, unit: unit.into() }
    }

    fn check(&self) -> Result<(), SpecError> {
        let bad = |reason: &str| SpecError::InvalidParameter { name: self.name.clone(), reason: reason.to_string() };
        if !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(bad("bounds must be finite"));
        }
        if self.lower >= self.upper {
            return Err(bad("lower bound must be below upper bound"));
        }
        if self.scale == Scale::Log && self.lower <= 0.0 {
            return Err(bad("log-scaled bounds must be positive"));
        }
        Ok(())
    }

    /// Map a unit-interval coordinate onto this bound.
    pub fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let v = match self.scale {
            Scale::Linear => self.lower + u * (self.upper - self.lower),
            Scale::Log => (self.lower.ln() + u * (self.upper.ln() - self.lower.ln())).exp(),
        };
        v.clamp(self.lower, self.upper)
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        let u = match self.scale {
            Scale::Linear => (v - self.lower) / (self.upper - self.lower),
            Scale::Log => (v.ln() - self.lower.ln()) / (self.upper.ln() - self.lower.ln()),
        };
        u.clamp(0.0, 1.0)
    }

    /// Width in the parameter's working domain (log-domain for log scale).
    pub fn width(&self) -> f64 {
        match self.scale {
            Scale::Linear => self.upper - self.lower,
            Scale::Log => self.upper.ln() - self.lower.ln(),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

/// Ordered per-parameter bounds; the search box handed to the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParameterSpaceRepr", into = "ParameterSpaceRepr")]
pub struct ParameterSpace {
    params: Vec<ParamBound>,
}

#[derive(Serialize, Deserialize)]
struct ParameterSpaceRepr {
    params: Vec<ParamBound>,
}

impl TryFrom<ParameterSpaceRepr> for ParameterSpace {
    type Error = SpecError;

    fn try_from(repr: ParameterSpaceRepr) -> Result<Self, Self::Error> {
        ParameterSpace::new(repr.params)
    }
}

impl From<ParameterSpace> for ParameterSpaceRepr {
    fn from(space: ParameterSpace) -> Self {
        ParameterSpaceRepr { params: space.params }
    }
}

impl ParameterSpace {
    pub fn new(params: Vec<ParamBound>) -> Result<Self, SpecError> {
        let mut seen = BTreeSet::new();
        for p in &params {
            p.check()?;
            if !seen.insert(p.name.as_str()) {
                return Err(SpecError::DuplicateParameter(p.name.clone()));
            }
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[ParamBound] {
        &self.params
    }

    pub fn get(&self, name: &str) -> Option<&ParamBound> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    /// Convert a unit-cube point into a named assignment.
    pub fn assignment_from_unit(&self, u: &[f64]) -> Assignment {
        self.params
            .iter()
            .zip(u)
            .map(|(p, &x)| (p.name.clone(), p.from_unit(x)))
            .collect()
    }

    pub fn unit_from_assignment(&self, a: &Assignment) -> Vec<f64> {
        self.params
            .iter()
            .map(|p| a.get(&p.name).map_or(0.5, |&v| p.to_unit(v)))
            .collect()
    }

    pub fn contains(&self, a: &Assignment) -> bool {
        self.params
            .iter()
            .all(|p| a.get(&p.name).is_some_and(|&v| p.contains(v)))
    }
}

/// Named numeric values for netlist placeholders.
pub type Assignment = BTreeMap<String, f64>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_metric_rejected() {
        let err = Specification::new(
            "t",
            Level::Easy,
            [SpecTarget::at_least(Metric::Gain, 40.0), SpecTarget::at_least(Metric::Gain, 50.0)],
        )
        .unwrap_err();
        assert_eq!(err, SpecError::DuplicateMetric(Metric::Gain));
    }

    #[test]
    fn empty_spec_rejected() {
        assert!(matches!(Specification::new("t", Level::Easy, []), Err(SpecError::Empty(_))));
    }

    #[test]
    fn non_finite_threshold_rejected() {
        let err = Specification::new("t", Level::Easy, [SpecTarget::at_least(Metric::Pm, f64::NAN)]);
        assert!(err.is_err());
    }

    #[test]
    fn both_directions_representable() {
        let spec = Specification::new(
            "t",
            Level::Hard,
            [SpecTarget::at_most(Metric::Gain, 90.0), SpecTarget::at_least(Metric::Power, 1.0)],
        )
        .unwrap();
        assert_eq!(spec.target(Metric::Gain).unwrap().direction, Direction::AtMost);
        assert_eq!(spec.target(Metric::Power).unwrap().direction, Direction::AtLeast);
    }

    #[test]
    fn spec_json_roundtrip_uses_canonical_names() {
        let spec = Specification::new(
            "task-1",
            Level::Easy,
            [SpecTarget::at_most(Metric::Power, 1000.0), SpecTarget::at_least(Metric::Gbw, 1e5)],
        )
        .unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"power\"") && json.contains("\"at-most\"") && json.contains("\"gbw\""));
        let back: Specification = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn parameter_space_invariants() {
        assert!(ParameterSpace::new(vec![ParamBound::new("w", 2.0, 1.0, Scale::Linear, "m")]).is_err());
        assert!(ParameterSpace::new(vec![ParamBound::new("w", 0.0, 1.0, Scale::Log, "m")]).is_err());
        assert!(ParameterSpace::new(vec![
            ParamBound::new("w", 1.0, 2.0, Scale::Linear, "m"),
            ParamBound::new("w", 1.0, 3.0, Scale::Linear, "m"),
        ])
        .is_err());
    }

    #[test]
    fn unit_mapping_log_scale() {
        let p = ParamBound::new("c", 1e-12, 1e-10, Scale::Log, "F");
        assert!((p.from_unit(0.5) - 1e-11).abs() < 1e-20);
        assert!((p.to_unit(1e-11) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn report_rejects_non_finite() {
        assert!(PerformanceReport::ok([(Metric::Gain, f64::INFINITY)]).is_err());
    }
}
