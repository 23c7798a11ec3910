//! Turning bound netlists into performance reports.

mod mock;
mod spice;
mod testbench;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{self, Issue, Netlist};
use crate::spec::{Metric, PerformanceReport, Specification};

pub use mock::{device_op, small_signal_report, DeviceOp, MockBackend, Polarity, SmallSignal};
pub use spice::{parse_measurements, SpiceBackend, SpiceConfig};
pub use testbench::{generate_testbench, REQUIRED_PORTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    OpPower,
    AcOpenloop,
    CmrrTb,
    PsrrTb,
    PsrnTb,
}

impl Analysis {
    pub const ALL: [Analysis; 5] =
        [Analysis::OpPower, Analysis::AcOpenloop, Analysis::CmrrTb, Analysis::PsrrTb, Analysis::PsrnTb];

    pub fn as_str(self) -> &'static str {
        match self {
            Analysis::OpPower => "op-power",
            Analysis::AcOpenloop => "ac-openloop",
            Analysis::CmrrTb => "cmrr-tb",
            Analysis::PsrrTb => "psrr-tb",
            Analysis::PsrnTb => "psrn-tb",
        }
    }

    pub fn metrics(self) -> &'static [Metric] {
        match self {
            Analysis::OpPower => &[Metric::Power],
            Analysis::AcOpenloop => &[Metric::Gain, Metric::Gbw, Metric::Pm],
            Analysis::CmrrTb => &[Metric::Cmrr],
            Analysis::PsrrTb => &[Metric::Psrr],
            Analysis::PsrnTb => &[Metric::Psrn],
        }
    }

    pub fn for_metric(m: Metric) -> Analysis {
        match m {
            Metric::Power => Analysis::OpPower,
            Metric::Gain | Metric::Gbw | Metric::Pm => Analysis::AcOpenloop,
            Metric::Cmrr => Analysis::CmrrTb,
            Metric::Psrr => Analysis::PsrrTb,
            Metric::Psrn => Analysis::PsrnTb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbenchSuite {
    pub analyses: Vec<Analysis>,
    /// Volts.
    pub supply: f64,
    /// Farads.
    pub load_cap: f64,
    /// Celsius.
    pub temperature: f64,
}

impl Default for TestbenchSuite {
    fn default() -> Self {
        Self { analyses: Analysis::ALL.to_vec(), supply: 1.8, load_cap: 10e-12, temperature: 27.0 }
    }
}

impl TestbenchSuite {
    /// The analyses needed to measure every metric of `spec`.
    pub fn for_spec(spec: &Specification) -> Self {
        let mut analyses: Vec<Analysis> = spec.metrics().map(Analysis::for_metric).collect();
        analyses.sort();
        analyses.dedup();
        Self { analyses, ..Self::default() }
    }

    pub fn metrics(&self) -> Vec<Metric> {
        let mut m: Vec<Metric> = self.analyses.iter().flat_map(|a| a.metrics().iter().copied()).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn check(&self) -> Result<(), SimError> {
        if !(self.supply > 0.0 && self.supply.is_finite()) {
            return Err(SimError::Config(format!("supply must be positive, got {}", self.supply)));
        }
        if !(self.load_cap >= 0.0 && self.load_cap.is_finite()) {
            return Err(SimError::Config(format!("load capacitance must be non-negative, got {}", self.load_cap)));
        }
        if self.analyses.is_empty() {
            return Err(SimError::Config("no analyses requested".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    pub analyses: Vec<Analysis>,
    /// Identical inputs give bit-identical reports.
    pub exact_determinism: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulator unavailable: {0}")]
    BackendUnavailable(String),
    #[error("netlist lacks testbench ports: {}", .0.join(", "))]
    PortMismatch(Vec<String>),
    #[error("netlist has unbound parameters: {}", .0.join(", "))]
    Unbound(Vec<String>),
    #[error("netlist is structurally invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Issue>),
    #[error("unsupported circuit: {0}")]
    Unsupported(String),
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub trait SimBackend: Send + Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn run(&self, netlist: &Netlist, suite: &TestbenchSuite) -> Result<PerformanceReport, SimError>;
}

/// Simulate a fully bound, structurally valid netlist.
///
/// Operating-point failures and non-convergence come back as a report with a
/// non-ok status; errors are reserved for inputs that cannot be simulated.
pub fn run_testbench(
    backend: &dyn SimBackend,
    netlist: &Netlist,
    suite: &TestbenchSuite,
) -> Result<PerformanceReport, SimError> {
    suite.check()?;
    let unbound: Vec<String> = netlist.symbols().into_iter().collect();
    if !unbound.is_empty() {
        return Err(SimError::Unbound(unbound));
    }
    let issues = netlist::validate(netlist);
    if !issues.is_empty() {
        return Err(SimError::Invalid(issues));
    }
    let report = backend.run(netlist, suite)?;
    if report.is_ok() {
        let missing: Vec<Metric> = suite.metrics().into_iter().filter(|m| report.get(*m).is_none()).collect();
        if !missing.is_empty() {
            return Err(SimError::Unsupported(format!(
                "{} produced no value for {}",
                backend.name(),
                missing.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
    }
    Ok(report)
}
