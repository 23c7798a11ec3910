//! Evaluation metrics: Pass@k, the all-targets pass rule, normalized search
//! space and average iterations to a passing design.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spec::{EvalOutcome, Metric, ParameterSpace, PerformanceReport, SimStatus, Specification};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("pass@k domain error: n={n}, c={c}, k={k} (need 0 <= c <= n and 1 <= k <= n)")]
    Domain { n: u64, c: u64, k: u64 },
    #[error("report is missing metrics: {}", join(.0))]
    MissingMetrics(Vec<Metric>),
    #[error("report status is {0:?}, not ok")]
    StatusNotOk(SimStatus),
    #[error("parameter sets differ: {0}")]
    Mismatch(String),
    #[error("parameter `{0}` is not nested within the full space")]
    NotNested(String),
}

fn join(ms: &[Metric]) -> String {
    ms.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", ")
}

/// Probability that at least one of `k` trials drawn from `n` (with `c`
/// correct) is correct: `1 - C(n-c, k) / C(n, k)`.
///
/// Evaluated as a running product so large `n` never overflows.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricError> {
    if c > n || k < 1 || k > n {
        return Err(MetricError::Domain { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    // C(n-c, k) / C(n, k) = prod_{i<k} (n-c-i) / (n-i)
    let miss = (0..k).fold(1.0_f64, |acc, i| acc * (n - c - i) as f64 / (n - i) as f64);
    Ok(1.0 - miss)
}

/// Outcome of checking a report against a specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecCheck {
    pub pass: bool,
    pub margins: BTreeMap<Metric, f64>,
}

impl SpecCheck {
    pub fn failed_metrics(&self) -> Vec<Metric> {
        self.margins.iter().filter(|(_, &m)| m < 0.0).map(|(k, _)| *k).collect()
    }

    /// Metric with the smallest margin (ties resolved by canonical order).
    pub fn worst(&self) -> Option<(Metric, f64)> {
        self.margins
            .iter()
            .fold(None, |best: Option<(Metric, f64)>, (&m, &v)| match best {
                Some((_, b)) if b <= v => best,
                _ => Some((m, v)),
            })
    }
}

/// A design passes only when every target holds; boundaries are inclusive.
pub fn spec_satisfied(report: &PerformanceReport, spec: &Specification) -> Result<SpecCheck, MetricError> {
    if report.status != SimStatus::Ok {
        return Err(MetricError::StatusNotOk(report.status));
    }
    let missing: Vec<Metric> = spec.metrics().filter(|m| report.get(*m).is_none()).collect();
    if !missing.is_empty() {
        return Err(MetricError::MissingMetrics(missing));
    }
    let margins: BTreeMap<Metric, f64> = spec
        .targets()
        .map(|t| (t.metric, t.margin(report.values[&t.metric])))
        .collect();
    let pass = margins.values().all(|&m| m >= 0.0);
    Ok(SpecCheck { pass, margins })
}

/// Mean per-parameter width ratio of `selected` relative to `full`.
///
/// Log-scaled parameters are compared on log-transformed bounds.
pub fn normalized_search_space(selected: &ParameterSpace, full: &ParameterSpace) -> Result<f64, MetricError> {
    let sel_names: BTreeSet<&str> = selected.names().collect();
    let full_names: BTreeSet<&str> = full.names().collect();
    if sel_names != full_names {
        let diff: Vec<&str> = sel_names.symmetric_difference(&full_names).copied().collect();
        return Err(MetricError::Mismatch(diff.join(", ")));
    }
    if full.dim() == 0 {
        return Err(MetricError::Mismatch("empty parameter space".into()));
    }
    let mut total = 0.0;
    for f in full.params() {
        let s = selected.get(&f.name).expect("names checked above");
        if s.lower < f.lower || s.upper > f.upper {
            return Err(MetricError::NotNested(f.name.clone()));
        }
        let mut s = s.clone();
        s.scale = f.scale;
        total += s.width() / f.width();
    }
    Ok(total / full.dim() as f64)
}

/// Average iterations over passing trials, or `NotAvailable` when none passed.
///
/// Serializes as a number or the string `"NA"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AvgIterations {
    Value(f64),
    NotAvailable,
}

impl Serialize for AvgIterations {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AvgIterations::Value(v) => s.serialize_f64(*v),
            AvgIterations::NotAvailable => s.serialize_str("NA"),
        }
    }
}

impl<'de> Deserialize<'de> for AvgIterations {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "NA" => Ok(AvgIterations::NotAvailable),
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(AvgIterations::Value)
                .ok_or_else(|| serde::de::Error::custom("invalid number")),
            other => Err(serde::de::Error::custom(format!("expected number or \"NA\", got {other}"))),
        }
    }
}

impl AvgIterations {
    pub fn value(self) -> Option<f64> {
        match self {
            AvgIterations::Value(v) => Some(v),
            AvgIterations::NotAvailable => None,
        }
    }
}

impl fmt::Display for AvgIterations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AvgIterations::Value(v) => write!(f, "{v:.1}"),
            AvgIterations::NotAvailable => f.write_str("NA"),
        }
    }
}

pub fn average_iterations(outcomes: &[EvalOutcome]) -> AvgIterations {
    let (sum, count) = outcomes
        .iter()
        .flat_map(|o| o.iterations_per_pass.iter())
        .fold((0u64, 0u64), |(s, c), &it| (s + it as u64, c + 1));
    if count == 0 {
        AvgIterations::NotAvailable
    } else {
        AvgIterations::Value(sum as f64 / count as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{Level, ParamBound, Scale, SpecTarget};

    fn reference_spec() -> Specification {
        Specification::new(
            "walkthrough",
            Level::Hard,
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

    #[test]
    fn pass_at_k_trivial_cases() {
        assert_eq!(pass_at_k(5, 5, 1).unwrap(), 1.0);
        assert_eq!(pass_at_k(5, 0, 1).unwrap(), 0.0);
        assert!((pass_at_k(5, 1, 1).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn pass_at_k_domain_errors() {
        assert!(pass_at_k(5, 6, 1).is_err());
        assert!(pass_at_k(5, 1, 0).is_err());
        assert!(pass_at_k(5, 1, 6).is_err());
    }

    #[test]
    fn pass_at_k_large_n_is_finite() {
        let p = pass_at_k(10_000, 37, 100).unwrap();
        assert!(p.is_finite() && (0.0..=1.0).contains(&p));
    }

    #[test]
    fn reference_report_passes() {
        let report = PerformanceReport::ok([
            (Metric::Gain, 72.88),
            (Metric::Gbw, 2.4e5),
            (Metric::Pm, 63.80),
            (Metric::Cmrr, 54.57),
            (Metric::Psrr, 43.88),
            (Metric::Psrn, 46.55),
            (Metric::Power, 30.35),
        ])
        .unwrap();
        let check = spec_satisfied(&report, &reference_spec()).unwrap();
        assert!(check.pass);
        assert!(check.margins[&Metric::Gain] > 0.0);
    }

    #[test]
    fn boundary_is_inclusive() {
        let spec = reference_spec();
        let report = PerformanceReport::ok(spec.targets().map(|t| (t.metric, t.threshold))).unwrap();
        let check = spec_satisfied(&report, &spec).unwrap();
        assert!(check.pass);
        assert!(check.margins.values().all(|&m| m == 0.0));
    }

    #[test]
    fn missing_metrics_listed() {
        let report = PerformanceReport::ok([(Metric::Gain, 80.0)]).unwrap();
        match spec_satisfied(&report, &reference_spec()) {
            Err(MetricError::MissingMetrics(ms)) => {
                assert_eq!(ms.len(), 6);
                assert!(!ms.contains(&Metric::Gain));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn status_not_ok_rejected() {
        let report = PerformanceReport::failed(SimStatus::NonConvergent);
        assert_eq!(
            spec_satisfied(&report, &reference_spec()).unwrap_err(),
            MetricError::StatusNotOk(SimStatus::NonConvergent)
        );
    }

    fn lin(name: &str, lo: f64, hi: f64) -> ParamBound {
        ParamBound::new(name, lo, hi, Scale::Linear, "")
    }

    #[test]
    fn search_space_identity_and_means() {
        let full = ParameterSpace::new((0..4).map(|i| lin(&format!("p{i}"), 0.0, 2.0)).collect()).unwrap();
        assert_eq!(normalized_search_space(&full, &full).unwrap(), 1.0);
        let half = ParameterSpace::new((0..4).map(|i| lin(&format!("p{i}"), 0.5, 1.5)).collect()).unwrap();
        assert_eq!(normalized_search_space(&half, &full).unwrap(), 0.5);

        let full2 = ParameterSpace::new(vec![lin("a", 0.0, 1.0), lin("b", 0.0, 1.0)]).unwrap();
        let sel2 = ParameterSpace::new(vec![lin("a", 0.2, 0.3), lin("b", 0.5, 0.8)]).unwrap();
        // (0.1 + 0.3) / 2
        assert!((normalized_search_space(&sel2, &full2).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn search_space_log_domain() {
        let full = ParameterSpace::new(vec![ParamBound::new("c", 1e-13, 1e-9, Scale::Log, "F")]).unwrap();
        let sel = ParameterSpace::new(vec![ParamBound::new("c", 1e-12, 1e-11, Scale::Log, "F")]).unwrap();
        // one decade out of four
        assert!((normalized_search_space(&sel, &full).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn search_space_errors() {
        let full = ParameterSpace::new(vec![lin("a", 0.0, 1.0)]).unwrap();
        let other = ParameterSpace::new(vec![lin("b", 0.0, 1.0)]).unwrap();
        assert!(matches!(normalized_search_space(&other, &full), Err(MetricError::Mismatch(_))));
        let wide = ParameterSpace::new(vec![lin("a", -1.0, 1.0)]).unwrap();
        assert!(matches!(normalized_search_space(&wide, &full), Err(MetricError::NotNested(_))));
    }

    fn outcome(iters: &[u32]) -> EvalOutcome {
        EvalOutcome { n: 5, c: iters.len() as u32, k: 1, iterations_per_pass: iters.to_vec() }
    }

    #[test]
    fn average_iterations_cases() {
        assert_eq!(average_iterations(&[outcome(&[1, 1, 1, 1, 1])]), AvgIterations::Value(1.0));
        let AvgIterations::Value(v) = average_iterations(&[outcome(&[1, 1, 2, 1, 1])]) else { panic!() };
        assert!((v - 1.2).abs() < 1e-12);
        assert_eq!(average_iterations(&[outcome(&[])]), AvgIterations::NotAvailable);
        assert_eq!(AvgIterations::NotAvailable.to_string(), "NA");
    }

    #[test]
    fn avg_iterations_serde() {
        let json = serde_json::to_string(&AvgIterations::NotAvailable).unwrap();
        assert_eq!(json, "\"NA\"");
        let back: AvgIterations = serde_json::from_str(&json).unwrap();
        assert_eq!(back, AvgIterations::NotAvailable);
        let v: AvgIterations = serde_json::from_str("1.2").unwrap();
        assert_eq!(v, AvgIterations::Value(1.2));
    }
}
