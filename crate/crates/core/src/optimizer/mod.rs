//! Bayesian optimization of device parameters against a specification.

mod gp;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

use crate::metrics::{spec_satisfied, MetricError};
use crate::spec::{Assignment, Metric, ParamBound, ParameterSpace, PerformanceReport, Specification};

pub use gp::{GaussianProcess, GpHyper, Kernel, JITTER};

/// Value the surrogate is trained on for failed evaluations.
pub const FAILURE_PENALTY: f64 = -10.0;

const EI_STARTS: usize = 64;
const EI_STEPS: [f64; 3] = [0.1, 0.03, 0.01];
/// Random likelihood restarts on the first fit; later fits warm-start.
const GP_RESTARTS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("degenerate search space: {0}")]
    DegenerateSpace(String),
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("trace has no evaluations")]
    EmptyTrace,
    #[error("report lacks metrics: {}", .0.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", "))]
    MissingMetrics(Vec<Metric>),
    #[error("surrogate model: {0}")]
    Surrogate(String),
    #[error("io error: {0}")]
    Io(String),
}

mod neg_inf_as_null {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// Scalar score of one evaluation: the smallest normalized spec margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigureOfMerit {
    /// `-inf` for failed simulations; serialized as `null`.
    #[serde(with = "neg_inf_as_null")]
    pub value: f64,
    pub worst_metric: Option<Metric>,
    pub all_satisfied: bool,
}

impl FigureOfMerit {
    pub fn failed() -> Self {
        Self { value: f64::NEG_INFINITY, worst_metric: None, all_satisfied: false }
    }

    /// A plain objective value; satisfied when non-negative.
    pub fn scalar(value: f64) -> Self {
        Self { value, worst_metric: None, all_satisfied: value >= 0.0 }
    }

    pub fn is_failure(&self) -> bool {
        self.value == f64::NEG_INFINITY
    }

    fn training_value(&self) -> f64 {
        if self.value.is_finite() {
            self.value.max(FAILURE_PENALTY)
        } else {
            FAILURE_PENALTY
        }
    }
}

pub fn figure_of_merit(report: &PerformanceReport, spec: &Specification) -> Result<FigureOfMerit, OptimizeError> {
    if !report.is_ok() {
        return Ok(FigureOfMerit::failed());
    }
    let check = spec_satisfied(report, spec).map_err(|e| match e {
        MetricError::MissingMetrics(m) => OptimizeError::MissingMetrics(m),
        other => OptimizeError::InvalidConfig(other.to_string()),
    })?;
    let Some((metric, value)) = check.worst() else {
        return Ok(FigureOfMerit::scalar(0.0));
    };
    Ok(FigureOfMerit { value, worst_metric: Some(metric), all_satisfied: value >= 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Acquisition {
    #[default]
    ExpectedImprovement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    pub n_initial: usize,
    pub n_iterations: usize,
    pub kernel: Kernel,
    pub acquisition: Acquisition,
    /// Exploration offset in standardized objective units.
    pub exploration_xi: f64,
    pub seed: u64,
    /// Stop as soon as an evaluation satisfies every target.
    pub early_stop: bool,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            n_initial: 8,
            n_iterations: 50,
            kernel: Kernel::Matern52,
            acquisition: Acquisition::ExpectedImprovement,
            exploration_xi: 0.01,
            seed: 0,
            early_stop: true,
        }
    }
}

impl BoConfig {
    /// Defaults with `n_initial = max(8, 2·dim)`.
    pub fn for_dim(dim: usize) -> Self {
        Self { n_initial: (2 * dim).max(8), ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn check(&self, dim: usize) -> Result<(), OptimizeError> {
        if self.n_initial < 2 * dim {
            return Err(OptimizeError::InvalidConfig(format!("n_initial {} is below 2 x dimension {dim}", self.n_initial)));
        }
        if self.n_iterations < 1 {
            return Err(OptimizeError::InvalidConfig("n_iterations must be at least 1".into()));
        }
        if !(self.exploration_xi >= 0.0) {
            return Err(OptimizeError::InvalidConfig("exploration_xi must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub assignment: Assignment,
    pub fom: FigureOfMerit,
    pub report: Option<PerformanceReport>,
}

/// Surrogate state at one acquisition step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDiagnostics {
    /// Index of the evaluation this step proposed.
    pub evaluation: usize,
    pub hyper: Option<GpHyper>,
    pub log_marginal_likelihood: Option<f64>,
    pub expected_improvement: Option<f64>,
    /// The surrogate could not be fit and the point was drawn at random.
    pub random_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoTrace {
    pub evaluations: Vec<Evaluation>,
    pub best_index: usize,
    pub model_diagnostics: Vec<ModelDiagnostics>,
}

impl BoTrace {
    pub fn best(&self) -> Option<&Evaluation> {
        self.evaluations.get(self.best_index)
    }

    pub fn save(&self, path: &Path) -> Result<(), OptimizeError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| OptimizeError::Io(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| OptimizeError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, OptimizeError> {
        let text = std::fs::read_to_string(path).map_err(|e| OptimizeError::Io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| OptimizeError::Io(e.to_string()))
    }

    fn push(&mut self, e: Evaluation) {
        let better = self.best().is_none_or(|b| e.fom.value > b.fom.value);
        self.evaluations.push(e);
        if better {
            self.best_index = self.evaluations.len() - 1;
        }
    }
}

/// Latin-hypercube sample of `n` points in the unit cube.
pub fn latin_hypercube(n: usize, dim: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, s) in strata.into_iter().enumerate() {
            pts[i][d] = (s as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    pts
}

fn check_space(space: &ParameterSpace) -> Result<(), OptimizeError> {
    if space.dim() == 0 {
        return Err(OptimizeError::DegenerateSpace("no parameters".into()));
    }
    if let Some(p) = space.params().iter().find(|p| !(p.width() > 0.0)) {
        return Err(OptimizeError::DegenerateSpace(format!("`{}` has zero width", p.name)));
    }
    Ok(())
}

fn expected_improvement(gp: &GaussianProcess, p: &[f64], best: f64, xi: f64, normal: &Normal) -> f64 {
    let (mu, var) = gp.predict_standardized(p);
    let sigma = var.sqrt();
    let imp = mu - best - xi;
    let z = imp / sigma;
    (imp * normal.cdf(z) + sigma * normal.pdf(z)).max(0.0)
}

/// Maximize EI by coordinate descent from the best observed points and random starts.
fn maximize_ei(gp: &GaussianProcess, xs: &[Vec<f64>], ys: &[f64], xi: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
    let normal = Normal::standard();
    let best = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_std = gp.standardize(best);
    let dim = xs[0].len();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|a, b| ys[*b].total_cmp(&ys[*a]));
    let mut starts: Vec<Vec<f64>> = order.iter().take(EI_STARTS / 8).map(|i| xs[*i].clone()).collect();
    while starts.len() < EI_STARTS {
        starts.push((0..dim).map(|_| rng.gen::<f64>()).collect());
    }
    let mut top = (starts[0].clone(), f64::NEG_INFINITY);
    for mut x in starts {
        let mut val = expected_improvement(gp, &x, best_std, xi, &normal);
        for step in EI_STEPS {
            let mut improved = true;
            let mut passes = 0;
            while improved && passes < 2 {
                improved = false;
                passes += 1;
                for d in 0..dim {
                    for dir in [-1.0, 1.0] {
                        let old = x[d];
                        x[d] = (old + dir * step).clamp(0.0, 1.0);
                        let v = expected_improvement(gp, &x, best_std, xi, &normal);
                        if v > val {
                            val = v;
                            improved = true;
                        } else {
                            x[d] = old;
                        }
                    }
                }
            }
        }
        if val > top.1 {
            top = (x, val);
        }
    }
    top
}

/// Maximize `objective` over `space`. The objective must return the
/// failure sentinel rather than panic for in-bounds input.
pub fn optimize<F>(space: &ParameterSpace, mut objective: F, config: &BoConfig) -> Result<BoTrace, OptimizeError>
where
    F: FnMut(&Assignment) -> (FigureOfMerit, Option<PerformanceReport>),
{
    check_space(space)?;
    config.check(space.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = BoTrace { evaluations: vec![], best_index: 0, model_diagnostics: vec![] };
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut eval = |u: Vec<f64>, trace: &mut BoTrace, xs: &mut Vec<Vec<f64>>, ys: &mut Vec<f64>| {
        let assignment = space.assignment_from_unit(&u);
        let (fom, report) = objective(&assignment);
        ys.push(fom.training_value());
        xs.push(u);
        trace.push(Evaluation { assignment, fom, report });
    };
    let done = |trace: &BoTrace| config.early_stop && trace.best().is_some_and(|b| b.fom.all_satisfied);

    for u in latin_hypercube(config.n_initial, space.dim(), &mut rng) {
        eval(u, &mut trace, &mut xs, &mut ys);
        if done(&trace) {
            return Ok(trace);
        }
    }
    let mut warm: Option<GpHyper> = None;
    for _ in 0..config.n_iterations {
        let fitted = GaussianProcess::fit(config.kernel, xs.clone(), &ys, warm.as_ref(), if warm.is_some() { 0 } else { GP_RESTARTS }, &mut rng);
        let (u, diag) = match fitted {
            Ok(gp) => {
                let (u, ei) = maximize_ei(&gp, &xs, &ys, config.exploration_xi, &mut rng);
                warm = Some(gp.hyper().clone());
                let diag = ModelDiagnostics {
                    evaluation: xs.len(),
                    hyper: Some(gp.hyper().clone()),
                    log_marginal_likelihood: Some(gp.log_marginal_likelihood()),
                    expected_improvement: Some(ei),
                    random_fallback: false,
                };
                (u, diag)
            }
            Err(e) => {
                log::warn!("surrogate fit failed, sampling at random: {e}");
                let u = (0..space.dim()).map(|_| rng.gen::<f64>()).collect();
                let diag = ModelDiagnostics {
                    evaluation: xs.len(),
                    hyper: None,
                    log_marginal_likelihood: None,
                    expected_improvement: None,
                    random_fallback: true,
                };
                (u, diag)
            }
        };
        trace.model_diagnostics.push(diag);
        eval(u, &mut trace, &mut xs, &mut ys);
        if done(&trace) {
            break;
        }
    }
    Ok(trace)
}

/// Uniform random sampling with the same trace format, as a baseline.
pub fn random_search<F>(space: &ParameterSpace, mut objective: F, n: usize, seed: u64) -> Result<BoTrace, OptimizeError>
where
    F: FnMut(&Assignment) -> (FigureOfMerit, Option<PerformanceReport>),
{
    check_space(space)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = BoTrace { evaluations: vec![], best_index: 0, model_diagnostics: vec![] };
    for _ in 0..n {
        let u: Vec<f64> = (0..space.dim()).map(|_| rng.gen::<f64>()).collect();
        let assignment = space.assignment_from_unit(&u);
        let (fom, report) = objective(&assignment);
        trace.push(Evaluation { assignment, fom, report });
    }
    Ok(trace)
}

/// Narrow each bound to `factor` of its width around the best evaluation,
/// clipped to the previous bounds.
pub fn shrink_space(previous: &ParameterSpace, trace: &BoTrace, factor: f64) -> Result<ParameterSpace, OptimizeError> {
    if !(factor > 0.0 && factor < 1.0) {
        return Err(OptimizeError::InvalidConfig(format!("shrink factor must lie in (0, 1), got {factor}")));
    }
    let best = trace.best().ok_or(OptimizeError::EmptyTrace)?;
    let params = previous
        .params()
        .iter()
        .map(|p| {
            let u = best.assignment.get(&p.name).map_or(0.5, |v| p.to_unit(*v));
            let lo = (u - factor / 2.0).max(0.0);
            let hi = (u + factor / 2.0).min(1.0);
            ParamBound::new(p.name.clone(), p.from_unit(lo), p.from_unit(hi), p.scale, p.unit.clone())
        })
        .collect();
    ParameterSpace::new(params).map_err(|e| OptimizeError::DegenerateSpace(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::normalized_search_space;
    use crate::spec::{Level, Scale, SimStatus, SpecTarget};
    use proptest::prelude::*;

    fn unit_square() -> ParameterSpace {
        ParameterSpace::new(vec![
            ParamBound::new("x0", 0.0, 1.0, Scale::Linear, ""),
            ParamBound::new("x1", 0.0, 1.0, Scale::Linear, ""),
        ])
        .unwrap()
    }

    fn quadratic(a: &Assignment) -> (FigureOfMerit, Option<PerformanceReport>) {
        (FigureOfMerit::scalar(-a.values().map(|v| (v - 0.3).powi(2)).sum::<f64>()), None)
    }

    fn reference_spec() -> Specification {
        Specification::new(
            "reference",
            Level::Easy,
            vec![
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

    fn reference_report() -> PerformanceReport {
        PerformanceReport::ok([
            (Metric::Gain, 72.88),
            (Metric::Gbw, 2.4e5),
            (Metric::Pm, 63.80),
            (Metric::Cmrr, 54.57),
            (Metric::Psrr, 43.88),
            (Metric::Psrn, 46.55),
            (Metric::Power, 30.35),
        ])
        .unwrap()
    }

    #[test]
    fn reference_worst_metric_is_the_smallest_relative_headroom() {
        let fom = figure_of_merit(&reference_report(), &reference_spec()).unwrap();
        assert!(fom.all_satisfied);
        // independent computation of the seven relative margins
        let margins: [(Metric, f64); 7] = [
            (Metric::Gain, (72.88 - 70.0) / 70.0),
            (Metric::Gbw, (2.4e5 - 2e5) / 2e5),
            (Metric::Pm, (63.80 - 60.0) / 60.0),
            (Metric::Cmrr, (54.57 - 50.0) / 50.0),
            (Metric::Psrr, (43.88 - 40.0) / 40.0),
            (Metric::Psrn, (46.55 - 40.0) / 40.0),
            (Metric::Power, (35.0 - 30.35) / 35.0),
        ];
        let (m, v) = margins.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(fom.worst_metric, Some(m));
        assert!((fom.value - v).abs() < 1e-12);
        assert_eq!(m, Metric::Gain);
    }

    #[test]
    fn fom_edge_cases() {
        let spec = reference_spec();
        let at = PerformanceReport::ok(spec.targets().map(|t| (t.metric, t.threshold))).unwrap();
        let fom = figure_of_merit(&at, &spec).unwrap();
        assert_eq!(fom.value, 0.0);
        assert!(fom.all_satisfied);
        let failed = figure_of_merit(&PerformanceReport::failed(SimStatus::SimFailed), &spec).unwrap();
        assert!(failed.is_failure() && !failed.all_satisfied);
        let partial = PerformanceReport::ok([(Metric::Gain, 80.0)]).unwrap();
        assert!(matches!(figure_of_merit(&partial, &spec), Err(OptimizeError::MissingMetrics(_))));
        let json = serde_json::to_string(&failed).unwrap();
        assert!(json.contains("\"value\":null"));
        assert_eq!(serde_json::from_str::<FigureOfMerit>(&json).unwrap(), failed);
    }

    #[test]
    fn quadratic_converges_and_beats_random() {
        let mut bo_sum = 0.0;
        let mut rs_sum = 0.0;
        for seed in 0..5 {
            let cfg = BoConfig { n_iterations: 32, early_stop: false, ..BoConfig::for_dim(2) }.with_seed(seed);
            let t = optimize(&unit_square(), quadratic, &cfg).unwrap();
            assert_eq!(t.evaluations.len(), 40);
            bo_sum += t.best().unwrap().fom.value;
            rs_sum += random_search(&unit_square(), quadratic, 40, seed).unwrap().best().unwrap().fom.value;
        }
        assert!(bo_sum / 5.0 >= -0.01, "{}", bo_sum / 5.0);
        assert!(bo_sum > rs_sum);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = BoConfig { n_iterations: 6, early_stop: false, ..BoConfig::for_dim(2) }.with_seed(3);
        let a = optimize(&unit_square(), quadratic, &cfg).unwrap();
        let b = optimize(&unit_square(), quadratic, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_objective_uses_whole_budget() {
        let cfg = BoConfig { n_iterations: 5, early_stop: false, ..BoConfig::for_dim(2) };
        let t = optimize(&unit_square(), |_| (FigureOfMerit::scalar(-1.0), None), &cfg).unwrap();
        assert_eq!(t.evaluations.len(), 13);
    }

    #[test]
    fn config_and_space_errors() {
        let cfg = BoConfig { n_initial: 2, ..BoConfig::default() };
        assert!(matches!(optimize(&unit_square(), quadratic, &cfg), Err(OptimizeError::InvalidConfig(_))));
        let empty = ParameterSpace::new(vec![]).unwrap();
        assert!(matches!(optimize(&empty, quadratic, &BoConfig::default()), Err(OptimizeError::DegenerateSpace(_))));
        let trace = BoTrace { evaluations: vec![], best_index: 0, model_diagnostics: vec![] };
        assert_eq!(shrink_space(&unit_square(), &trace, 0.5), Err(OptimizeError::EmptyTrace));
    }

    #[test]
    fn trace_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = BoConfig { n_iterations: 2, early_stop: false, ..BoConfig::for_dim(2) };
        let t = optimize(&unit_square(), quadratic, &cfg).unwrap();
        let path = dir.path().join("trace.json");
        t.save(&path).unwrap();
        assert_eq!(BoTrace::load(&path).unwrap(), t);
    }

    fn centered_trace(space: &ParameterSpace) -> BoTrace {
        let a = space.assignment_from_unit(&vec![0.5; space.dim()]);
        BoTrace {
            evaluations: vec![Evaluation { assignment: a, fom: FigureOfMerit::scalar(0.0), report: None }],
            best_index: 0,
            model_diagnostics: vec![],
        }
    }

    #[test]
    fn shrinking_twice_quarters_the_space() {
        let full = ParameterSpace::new(vec![
            ParamBound::new("w", 1e-6, 100e-6, Scale::Log, "m"),
            ParamBound::new("x", -2.0, 6.0, Scale::Linear, ""),
        ])
        .unwrap();
        let once = shrink_space(&full, &centered_trace(&full), 0.5).unwrap();
        assert!((normalized_search_space(&once, &full).unwrap() - 0.5).abs() < 1e-12);
        let twice = shrink_space(&once, &centered_trace(&once), 0.5).unwrap();
        assert!((normalized_search_space(&twice, &full).unwrap() - 0.25).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn evaluations_stay_in_bounds(seed in 0u64..1000, lo in 1e-9f64..1e-6, span in 2.0f64..1e4) {
            let space = ParameterSpace::new(vec![
                ParamBound::new("a", lo, lo * span, Scale::Log, ""),
                ParamBound::new("b", -lo, lo * span, Scale::Linear, ""),
            ]).unwrap();
            let cfg = BoConfig { n_iterations: 2, early_stop: false, ..BoConfig::for_dim(2) }.with_seed(seed);
            let t = optimize(&space, |a| (FigureOfMerit::scalar(-a["a"] / lo), None), &cfg).unwrap();
            for e in &t.evaluations {
                prop_assert!(space.contains(&e.assignment));
            }
        }

        #[test]
        fn shrink_output_is_nested(us in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 3), 1..8),
                                   factor in 0.01f64..0.99) {
            let space = ParameterSpace::new(vec![
                ParamBound::new("a", 1e-6, 1e-3, Scale::Log, ""),
                ParamBound::new("b", -1.0, 1.0, Scale::Linear, ""),
                ParamBound::new("c", 0.5, 4.0, Scale::Log, ""),
            ]).unwrap();
            let mut trace = BoTrace { evaluations: vec![], best_index: 0, model_diagnostics: vec![] };
            for (i, u) in us.iter().enumerate() {
                trace.push(Evaluation { assignment: space.assignment_from_unit(u), fom: FigureOfMerit::scalar(-(i as f64 % 3.0)), report: None });
            }
            let s = shrink_space(&space, &trace, factor).unwrap();
            for (p, q) in s.params().iter().zip(space.params()) {
                prop_assert!(p.lower >= q.lower && p.upper <= q.upper);
                prop_assert!(p.width() <= factor * q.width() * (1.0 + 1e-9));
            }
        }
    }
}
