use std::collections::BTreeMap;

use super::{normalize_node, Device, DeviceKind, Netlist, NetlistError, SubcktDef, Value};

/// Engineering suffixes, longest first so `meg` wins over `m`.
const SUFFIXES: &[(&str, i32)] = &[
    ("meg", 6),
    ("t", 12),
    ("g", 9),
    ("k", 3),
    ("m", -3),
    ("u", -6),
    ("n", -9),
    ("p", -12),
    ("f", -15),
];

/// Parse a numeric literal with optional engineering suffix, or a `{name}` placeholder.
///
/// Trailing unit letters after a suffix are ignored (`10kohm`, `1pF`).
pub fn parse_value(token: &str) -> Result<Value, String> {
    let t = token.trim();
    if let Some(inner) = t.strip_prefix('{') {
        let inner = inner
            .strip_suffix('}')
            .ok_or_else(|| format!("unterminated placeholder `{t}`"))?
            .trim()
            .to_ascii_lowercase();
        let ident = !inner.is_empty()
            && inner.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && inner.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !ident {
            return Err(format!("unsupported parameter expression `{t}`"));
        }
        return Ok(Value::Sym(inner));
    }
    let lower = t.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    let mut end = 0;
    if end < bytes.len() && (bytes[end] == b'+' || bytes[end] == b'-') {
        end += 1;
    }
    let digits_start = end;
    while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
        end += 1;
    }
    if end == digits_start || !lower[digits_start..end].bytes().any(|b| b.is_ascii_digit()) {
        return Err(format!("invalid number `{t}`"));
    }
    // exponent part: e[+-]digits, only if digits follow
    if end < bytes.len() && bytes[end] == b'e' {
        let mut j = end + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let exp_digits = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_digits {
            end = j;
        }
    }
    let mantissa = &lower[..end];
    let rest = &lower[end..];
    let base: f64 = mantissa.parse().map_err(|_| format!("invalid number `{t}`"))?;
    if rest.is_empty() {
        return Ok(Value::Num(base));
    }
    if !rest.bytes().all(|b| b.is_ascii_alphabetic()) {
        return Err(format!("invalid number `{t}`"));
    }
    for (suffix, exp) in SUFFIXES {
        if rest.starts_with(suffix) {
            // Re-parse in decimal so `0.42u` is the correctly rounded 4.2e-7.
            let v = if mantissa.contains('e') {
                base * 10f64.powi(*exp)
            } else {
                format!("{mantissa}e{exp}").parse().map_err(|_| format!("invalid number `{t}`"))?
            };
            return Ok(Value::Num(v));
        }
    }
    // bare unit letters (`1v`, `5ohm`)
    Ok(Value::Num(base))
}

struct Card {
    line: usize,
    text: String,
}

fn logical_cards(text: &str) -> (Option<String>, Vec<Card>) {
    let mut title = None;
    let mut cards: Vec<Card> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if idx == 0 {
            if let Some(t) = line.strip_prefix('*') {
                title = Some(t.trim().to_string());
                continue;
            }
        }
        let line = match line.find(';') {
            Some(pos) => line[..pos].trim_end(),
            None => line,
        };
        if line.is_empty() || line.starts_with('*') {
            continue;
        }
        if let Some(cont) = line.strip_prefix('+') {
            if let Some(last) = cards.last_mut() {
                last.text.push(' ');
                last.text.push_str(cont.trim());
                continue;
            }
        }
        cards.push(Card { line: line_no, text: line.to_string() });
    }
    (title, cards)
}

/// Split a card into tokens, gluing `key = value` into `key=value`.
fn tokenize(text: &str) -> Vec<String> {
    let raw: Vec<&str> = text.split_whitespace().collect();
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < raw.len() {
        let tok = raw[i];
        if tok == "=" && !out.is_empty() && i + 1 < raw.len() {
            let last = out.pop().unwrap();
            out.push(format!("{last}={}", raw[i + 1]));
            i += 2;
        } else if tok.ends_with('=') && tok.len() > 1 && i + 1 < raw.len() {
            out.push(format!("{tok}{}", raw[i + 1]));
            i += 2;
        } else if tok.starts_with('=') && tok.len() > 1 && !out.is_empty() {
            let last = out.pop().unwrap();
            out.push(format!("{last}{tok}"));
            i += 1;
        } else {
            out.push(tok.to_string());
            i += 1;
        }
    }
    out
}

fn err(line: usize, reason: impl Into<String>) -> NetlistError {
    NetlistError::Parse { line, reason: reason.into() }
}

fn value_at(line: usize, tok: &str) -> Result<Value, NetlistError> {
    parse_value(tok).map_err(|e| err(line, e))
}

fn split_kv(line: usize, tok: &str) -> Result<Option<(String, Value)>, NetlistError> {
    match tok.split_once('=') {
        Some((k, v)) => {
            if k.is_empty() {
                return Err(err(line, format!("malformed parameter `{tok}`")));
            }
            Ok(Some((k.to_ascii_lowercase(), value_at(line, v)?)))
        }
        None => Ok(None),
    }
}

fn parse_device(card: &Card) -> Result<Device, NetlistError> {
    let line = card.line;
    let tokens = tokenize(&card.text);
    let name = tokens[0].to_ascii_lowercase();
    let first = name.chars().next().unwrap_or(' ');
    let kind = DeviceKind::from_prefix(first)
        .ok_or_else(|| NetlistError::UnsupportedCard { line, card: tokens[0].clone() })?;

    let mut positional: Vec<&str> = Vec::new();
    let mut params = BTreeMap::new();
    for tok in &tokens[1..] {
        match split_kv(line, tok)? {
            Some((k, v)) => {
                params.insert(k, v);
            }
            None => {
                if !params.is_empty() {
                    return Err(err(line, format!("positional token `{tok}` after parameters")));
                }
                positional.push(tok);
            }
        }
    }

    let mut model = None;
    let nodes: Vec<String>;
    match kind {
        DeviceKind::Mosfet => {
            if positional.len() != 5 {
                return Err(err(line, format!("mosfet `{name}` needs 4 nodes and a model")));
            }
            nodes = positional[..4].iter().map(|n| normalize_node(n)).collect();
            model = Some(positional[4].to_ascii_lowercase());
        }
        DeviceKind::SubcktInstance => {
            if positional.len() < 2 {
                return Err(err(line, format!("instance `{name}` needs nodes and a subcircuit name")));
            }
            let (sub, ns) = positional.split_last().unwrap();
            nodes = ns.iter().map(|n| normalize_node(n)).collect();
            model = Some(sub.to_ascii_lowercase());
        }
        DeviceKind::Resistor | DeviceKind::Capacitor => {
            if positional.len() != 3 {
                return Err(err(line, format!("`{name}` needs 2 nodes and a value")));
            }
            nodes = positional[..2].iter().map(|n| normalize_node(n)).collect();
            params.insert("value".into(), value_at(line, positional[2])?);
        }
        DeviceKind::Vsource | DeviceKind::Isource => {
            if positional.len() < 2 {
                return Err(err(line, format!("source `{name}` needs 2 nodes")));
            }
            nodes = positional[..2].iter().map(|n| normalize_node(n)).collect();
            parse_source_spec(line, &positional[2..], &mut params)?;
        }
    }
    let mut dev = Device::new(name, kind, nodes).map_err(|e| err(line, e.to_string()))?;
    dev.model = model;
    dev.params = params;
    Ok(dev)
}

fn parse_source_spec(
    line: usize,
    toks: &[&str],
    params: &mut BTreeMap<String, Value>,
) -> Result<(), NetlistError> {
    let mut i = 0;
    while i < toks.len() {
        let t = toks[i].to_ascii_lowercase();
        match t.as_str() {
            "dc" => {
                let v = toks.get(i + 1).ok_or_else(|| err(line, "`dc` without value"))?;
                params.insert("dc".into(), value_at(line, v)?);
                i += 2;
            }
            "ac" => {
                let v = toks.get(i + 1).ok_or_else(|| err(line, "`ac` without magnitude"))?;
                params.insert("ac".into(), value_at(line, v)?);
                i += 2;
                if let Some(p) = toks.get(i) {
                    if let Ok(pv) = parse_value(p) {
                        params.insert("acphase".into(), pv);
                        i += 1;
                    }
                }
            }
            _ if i == 0 => {
                params.insert("dc".into(), value_at(line, &t)?);
                i += 1;
            }
            _ => {
                return Err(NetlistError::UnsupportedCard { line, card: format!("source option `{t}`") });
            }
        }
    }
    Ok(())
}

/// Parse netlist text in the supported SPICE subset.
pub fn parse(text: &str) -> Result<Netlist, NetlistError> {
    if text.trim().is_empty() {
        return Err(err(1, "empty netlist"));
    }
    let (title, cards) = logical_cards(text);
    let mut netlist = Netlist::new(title.unwrap_or_default());
    let mut top_devices: Vec<Device> = Vec::new();
    let mut blocks: Vec<SubcktDef> = Vec::new();
    let mut open: Option<SubcktDef> = None;

    for card in &cards {
        let line = card.line;
        if card.text.starts_with('.') {
            let tokens = tokenize(&card.text);
            let directive = tokens[0].to_ascii_lowercase();
            match directive.as_str() {
                ".end" => break,
                ".include" | ".inc" => {
                    let rest = card.text[tokens[0].len()..].trim();
                    let path = rest.trim_matches(|c| c == '"' || c == '\'');
                    if path.is_empty() {
                        return Err(err(line, "`.include` without a path"));
                    }
                    netlist.includes.push(path.to_string());
                }
                ".param" => {
                    if tokens.len() < 2 {
                        return Err(err(line, "`.param` without definitions"));
                    }
                    for tok in &tokens[1..] {
                        match split_kv(line, tok)? {
                            Some((k, Value::Num(v))) => {
                                netlist.params.insert(k, v);
                            }
                            Some((k, Value::Sym(_))) => {
                                return Err(err(line, format!("`.param {k}` must be numeric")));
                            }
                            None => return Err(err(line, format!("malformed `.param` token `{tok}`"))),
                        }
                    }
                }
                ".subckt" => {
                    if open.is_some() {
                        return Err(err(line, "nested `.subckt` is not supported"));
                    }
                    if tokens.len() < 2 {
                        return Err(err(line, "`.subckt` without a name"));
                    }
                    let mut ports = Vec::new();
                    for tok in &tokens[2..] {
                        if tok.contains('=') {
                            return Err(NetlistError::UnsupportedCard {
                                line,
                                card: format!("subcircuit parameter `{tok}`"),
                            });
                        }
                        ports.push(normalize_node(tok));
                    }
                    open = Some(SubcktDef { name: tokens[1].to_ascii_lowercase(), ports, devices: Vec::new() });
                }
                ".ends" => {
                    let def = open.take().ok_or_else(|| err(line, "`.ends` without `.subckt`"))?;
                    if let Some(name) = tokens.get(1) {
                        if !name.eq_ignore_ascii_case(&def.name) {
                            return Err(err(line, format!("`.ends {name}` closes `{}`", def.name)));
                        }
                    }
                    blocks.push(def);
                }
                _ => return Err(NetlistError::UnsupportedCard { line, card: tokens[0].clone() }),
            }
            continue;
        }
        let dev = parse_device(card)?;
        match open.as_mut() {
            Some(def) => def.devices.push(dev),
            None => top_devices.push(dev),
        }
    }
    if let Some(def) = open {
        return Err(err(cards.last().map_or(1, |c| c.line), format!("unterminated `.subckt {}`", def.name)));
    }

    // The last block is the cell unless the deck has top-level devices.
    if top_devices.is_empty() {
        if let Some(cell) = blocks.pop() {
            netlist.cell = Some(cell.name);
            netlist.ports = cell.ports;
            netlist.devices = cell.devices;
        }
    } else {
        netlist.devices = top_devices;
    }
    netlist.subckts = blocks;
    Ok(netlist)
}
