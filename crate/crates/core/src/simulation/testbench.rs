//! SPICE decks wrapping an op-amp cell.

use std::fmt::Write;

use super::{Analysis, SimError, TestbenchSuite};
use crate::netlist::Netlist;

/// Ports every op-amp cell must expose.
pub const REQUIRED_PORTS: [&str; 5] = ["inp", "inn", "out", "vdd", "vss"];

/// Feedback resistor and capacitor that bias the output at DC and open the loop at AC.
const FEEDBACK_R: &str = "1e9";
const FEEDBACK_C: &str = "1";

/// One deck for `analysis`. The cell is instantiated as `xdut` in unity-gain
/// DC feedback; every measurement lands in the log as `name = value`.
pub fn generate_testbench(cell: &Netlist, analysis: Analysis, suite: &TestbenchSuite) -> Result<String, SimError> {
    suite.check()?;
    let name = cell.cell.as_deref().ok_or_else(|| SimError::PortMismatch(REQUIRED_PORTS.iter().map(|p| p.to_string()).collect()))?;
    let missing: Vec<String> =
        REQUIRED_PORTS.iter().filter(|p| !cell.ports.iter().any(|q| q == *p)).map(|p| p.to_string()).collect();
    if !missing.is_empty() {
        return Err(SimError::PortMismatch(missing));
    }

    let body = cell.serialize();
    let body = body.strip_suffix(".end\n").unwrap_or(&body);
    let mut d = String::new();
    d.push_str(body);
    let vdd_ac = if analysis == Analysis::PsrrTb { " ac 1" } else { "" };
    let vss_ac = if analysis == Analysis::PsrnTb { " ac 1" } else { "" };
    let mid = suite.supply / 2.0;
    let _ = writeln!(d, ".temp {}", suite.temperature);
    let _ = writeln!(d, "vdd vdd 0 dc {}{vdd_ac}", suite.supply);
    let _ = writeln!(d, "vss vss 0 dc 0{vss_ac}");
    let _ = writeln!(d, "xdut {} {name}", cell.ports.join(" "));
    let _ = writeln!(d, "cl out 0 {}", suite.load_cap);
    let _ = writeln!(d, "rfb out fb {FEEDBACK_R}");
    let _ = writeln!(d, "cfb fb 0 {FEEDBACK_C}");
    match analysis {
        Analysis::CmrrTb => {
            let _ = writeln!(d, "vcm cm 0 dc 0 ac 1");
            let _ = writeln!(d, "vinp inp cm dc {mid}");
            let _ = writeln!(d, "einn inn fb cm 0 1");
        }
        Analysis::AcOpenloop => {
            let _ = writeln!(d, "vinp inp 0 dc {mid} ac 1");
            let _ = writeln!(d, "vinn inn fb dc 0");
        }
        _ => {
            let _ = writeln!(d, "vinp inp 0 dc {mid}");
            let _ = writeln!(d, "vinn inn fb dc 0");
        }
    }
    match analysis {
        Analysis::OpPower => {
            let _ = writeln!(d, ".dc vdd {0} {0} 1", suite.supply);
            let _ = writeln!(d, ".meas dc ivdd find i(vdd) at={}", suite.supply);
        }
        Analysis::AcOpenloop => {
            let _ = writeln!(d, ".ac dec 50 1 1e10");
            let _ = writeln!(d, ".meas ac gain_db find vdb(out) at=1");
            let _ = writeln!(d, ".meas ac ugf when vdb(out)=0 cross=1");
            let _ = writeln!(d, ".meas ac phase_ugf find vp(out) when vdb(out)=0 cross=1");
        }
        Analysis::CmrrTb => {
            let _ = writeln!(d, ".ac dec 10 1 10");
            let _ = writeln!(d, ".meas ac acm_db find vdb(out) at=1");
        }
        Analysis::PsrrTb => {
            let _ = writeln!(d, ".ac dec 10 1 10");
            let _ = writeln!(d, ".meas ac asup_db find vdb(out) at=1");
        }
        Analysis::PsrnTb => {
            let _ = writeln!(d, ".ac dec 10 1 10");
            let _ = writeln!(d, ".meas ac asn_db find vdb(out) at=1");
        }
    }
    d.push_str(".end\n");
    Ok(d)
}

/// Measurement names each deck must produce.
pub(crate) fn measurements(analysis: Analysis) -> &'static [&'static str] {
    match analysis {
        Analysis::OpPower => &["ivdd"],
        Analysis::AcOpenloop => &["gain_db", "ugf", "phase_ugf"],
        Analysis::CmrrTb => &["acm_db"],
        Analysis::PsrrTb => &["asup_db"],
        Analysis::PsrnTb => &["asn_db"],
    }
}

/// Phase margin in degrees from the output phase at unity gain, in radians.
/// The phase is wrapped into (-360, 0] first.
pub(crate) fn phase_margin(phase_rad: f64) -> f64 {
    let mut p = phase_rad.to_degrees() % 360.0;
    if p > 0.0 {
        p -= 360.0;
    }
    180.0 + p
}
