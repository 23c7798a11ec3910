//! ngspice batch-mode backend.

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::testbench::{measurements, phase_margin};
use super::{generate_testbench, Analysis, Capabilities, SimBackend, SimError, TestbenchSuite};
use crate::netlist::Netlist;
use crate::spec::{Metric, PerformanceReport, SimStatus};

const NONCONVERGENCE: [&str; 5] =
    ["no convergence", "timestep too small", "singular matrix", "gmin stepping failed", "source stepping failed"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpiceConfig {
    pub binary: String,
    /// Model files added to every deck with `.include`.
    pub includes: Vec<String>,
    /// Renames generic model names (`nfet`, `pfet`) to those in the model files.
    pub model_map: BTreeMap<String, String>,
    pub work_dir: PathBuf,
    /// Keep scratch directories of successful runs too.
    pub keep_files: bool,
    pub timeout_secs: u64,
}

impl Default for SpiceConfig {
    fn default() -> Self {
        Self {
            binary: "ngspice".into(),
            includes: vec![],
            model_map: BTreeMap::new(),
            work_dir: std::env::temp_dir().join("strata-spice"),
            keep_files: false,
            timeout_secs: 60,
        }
    }
}

/// Parse `name = value` measurement lines from an ngspice log.
pub fn parse_measurements(log: &str) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for line in log.lines() {
        let Some((lhs, rhs)) = line.split_once('=') else { continue };
        let name = lhs.trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            continue;
        }
        let Some(first) = rhs.split_whitespace().next() else { continue };
        if let Ok(v) = first.parse::<f64>() {
            out.insert(name.to_ascii_lowercase(), v);
        }
    }
    out
}

#[derive(Debug)]
pub struct SpiceBackend {
    config: SpiceConfig,
    counter: AtomicU64,
}

enum DeckResult {
    Values(BTreeMap<String, f64>),
    Status(SimStatus),
}

impl SpiceBackend {
    pub fn new(config: SpiceConfig) -> Self {
        Self { config, counter: AtomicU64::new(0) }
    }

    pub fn config(&self) -> &SpiceConfig {
        &self.config
    }

    fn prepare(&self, netlist: &Netlist) -> Netlist {
        let mut n = netlist.clone();
        for d in &mut n.devices {
            if let Some(m) = d.model.as_mut() {
                if let Some(to) = self.config.model_map.get(m.as_str()) {
                    *m = to.clone();
                }
            }
        }
        n.includes.extend(self.config.includes.iter().cloned());
        n
    }

    fn run_deck(&self, dir: &Path, deck: &str, analysis: Analysis) -> Result<DeckResult, SimError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("deck.sp"), deck)?;
        let spawned = Command::new(&self.config.binary)
            .args(["-b", "-o", "out.log", "deck.sp"])
            .current_dir(dir)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn();
        let mut child = match spawned {
            Ok(c) => c,
            Err(e) if e.kind() == ErrorKind::NotFound => {
                return Err(SimError::BackendUnavailable(format!("`{}` not found", self.config.binary)))
            }
            Err(e) => return Err(e.into()),
        };
        let deadline = Instant::now() + Duration::from_secs(self.config.timeout_secs);
        loop {
            if child.try_wait()?.is_some() {
                break;
            }
            if Instant::now() > deadline {
                let _ = child.kill();
                let _ = child.wait();
                log::warn!("{} timed out in {}", analysis.as_str(), dir.display());
                return Ok(DeckResult::Status(SimStatus::NonConvergent));
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        let log_text = fs::read_to_string(dir.join("out.log")).unwrap_or_default();
        let lower = log_text.to_ascii_lowercase();
        if NONCONVERGENCE.iter().any(|p| lower.contains(p)) {
            return Ok(DeckResult::Status(SimStatus::NonConvergent));
        }
        let meas = parse_measurements(&log_text);
        let mut lines = String::new();
        for (k, v) in &meas {
            lines.push_str(&format!("{k} = {v:e}\n"));
        }
        fs::write(dir.join("meas.txt"), lines)?;
        if measurements(analysis).iter().any(|m| !meas.contains_key(*m)) {
            return Ok(DeckResult::Status(SimStatus::SimFailed));
        }
        Ok(DeckResult::Values(meas))
    }
}

impl SimBackend for SpiceBackend {
    fn name(&self) -> &str {
        "ngspice"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { analyses: Analysis::ALL.to_vec(), exact_determinism: false }
    }

    fn run(&self, netlist: &Netlist, suite: &TestbenchSuite) -> Result<PerformanceReport, SimError> {
        let cell = self.prepare(netlist);
        let mut analyses = suite.analyses.clone();
        // rejection ratios are relative to the open-loop gain
        if analyses.iter().any(|a| matches!(a, Analysis::CmrrTb | Analysis::PsrrTb | Analysis::PsrnTb))
            && !analyses.contains(&Analysis::AcOpenloop)
        {
            analyses.push(Analysis::AcOpenloop);
        }
        analyses.sort();
        analyses.dedup();
        let run = self.counter.fetch_add(1, Ordering::Relaxed);
        let root = self.config.work_dir.join(format!("run-{}-{run}", std::process::id()));
        let mut meas = BTreeMap::new();
        let mut status = SimStatus::Ok;
        for a in &analyses {
            let deck = generate_testbench(&cell, *a, suite)?;
            match self.run_deck(&root.join(a.as_str()), &deck, *a) {
                Ok(DeckResult::Values(v)) => meas.extend(v),
                Ok(DeckResult::Status(s)) => {
                    status = s;
                    break;
                }
                Err(e) => {
                    let _ = fs::remove_dir_all(&root);
                    return Err(e);
                }
            }
        }
        if status != SimStatus::Ok {
            log::info!("simulation files kept in {}", root.display());
            return Ok(PerformanceReport::failed(status));
        }
        if !self.config.keep_files {
            let _ = fs::remove_dir_all(&root);
        }
        let wanted = suite.metrics();
        let gain = meas.get("gain_db").copied();
        let mut values = Vec::new();
        for m in wanted {
            let v = match m {
                Metric::Power => meas["ivdd"].abs() * suite.supply * 1e6,
                Metric::Gain => meas["gain_db"],
                Metric::Gbw => meas["ugf"],
                Metric::Pm => phase_margin(meas["phase_ugf"]),
                Metric::Cmrr => gain.unwrap_or(f64::NAN) - meas["acm_db"],
                Metric::Psrr => gain.unwrap_or(f64::NAN) - meas["asup_db"],
                Metric::Psrn => gain.unwrap_or(f64::NAN) - meas["asn_db"],
            };
            values.push((m, v));
        }
        PerformanceReport::ok(values).map_err(|e| SimError::Domain(e.to_string()))
    }
}
