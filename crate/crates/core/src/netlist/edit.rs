use serde::{Deserialize, Serialize};

use super::{normalize_node, Device, Netlist, NetlistError, Value};

/// A single structural edit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum EditOp {
    /// Insert a device; its nodes may be new.
    AddDevice { device: Device },
    RemoveDevice { name: String },
    /// Move one terminal (0-based) of a device onto an existing node.
    ReconnectTerminal { device: String, terminal: usize, node: String },
    /// Set a device parameter, or with no device, substitute a placeholder
    /// everywhere it appears.
    SetParam {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        device: Option<String>,
        name: String,
        value: Value,
    },
}

/// Apply an edit, returning a new netlist. The input is left untouched.
pub fn apply_edit(n: &Netlist, op: &EditOp) -> Result<Netlist, NetlistError> {
    let mut out = n.clone();
    match op {
        EditOp::AddDevice { device } => {
            if out.device(&device.name).is_some() {
                return Err(NetlistError::InvalidDevice(format!("device `{}` already exists", device.name)));
            }
            if let Some(count) = device.kind.terminal_count() {
                if device.nodes.len() != count {
                    return Err(NetlistError::InvalidDevice(format!(
                        "device `{}` needs {count} nodes, got {}",
                        device.name,
                        device.nodes.len()
                    )));
                }
            }
            out.devices.push(device.clone());
        }
        EditOp::RemoveDevice { name } => {
            let name = name.to_ascii_lowercase();
            let before = out.devices.len();
            out.devices.retain(|d| d.name != name);
            if out.devices.len() == before {
                return Err(NetlistError::UnknownDevice(name));
            }
        }
        EditOp::ReconnectTerminal { device, terminal, node } => {
            let node = normalize_node(node);
            if !n.has_node(&node) {
                return Err(NetlistError::UnknownNode(node));
            }
            let d = out
                .device_mut(device)
                .ok_or_else(|| NetlistError::UnknownDevice(device.to_ascii_lowercase()))?;
            let slot = d
                .nodes
                .get_mut(*terminal)
                .ok_or_else(|| NetlistError::BadTerminal { device: device.to_ascii_lowercase(), terminal: *terminal })?;
            *slot = node;
        }
        EditOp::SetParam { device: Some(device), name, value } => {
            let d = out
                .device_mut(device)
                .ok_or_else(|| NetlistError::UnknownDevice(device.to_ascii_lowercase()))?;
            d.params.insert(name.to_ascii_lowercase(), value.clone());
        }
        EditOp::SetParam { device: None, name, value } => {
            let name = name.to_ascii_lowercase();
            let mut hit = false;
            for d in &mut out.devices {
                for v in d.params.values_mut() {
                    if v.as_sym() == Some(name.as_str()) {
                        *v = value.clone();
                        hit = true;
                    }
                }
            }
            if !hit {
                return Err(NetlistError::UnknownSymbol(name));
            }
        }
    }
    Ok(out)
}
