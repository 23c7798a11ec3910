//! Loopback HTTP servers for exercising the HTTP backends without a network.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

type Handler = dyn Fn(&str, &serde_json::Value) -> (u16, serde_json::Value) + Send + Sync;

/// Serves JSON requests on 127.0.0.1 until dropped.
pub struct JsonServer {
    addr: std::net::SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl JsonServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&str, &serde_json::Value) -> (u16, serde_json::Value) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let addr = listener.local_addr().expect("local addr");
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handler: Arc<Handler> = Arc::new(handler);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    let _ = respond(stream, handler.as_ref());
                }
            }
        });
        Self { addr, stop, handle: Some(handle) }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for JsonServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn respond(stream: TcpStream, handler: &Handler) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().unwrap_or(0);
        }
    }
    let mut buf = vec![0u8; len];
    reader.read_exact(&mut buf)?;
    let body = serde_json::from_slice(&buf).unwrap_or(serde_json::Value::Null);
    let (status, reply) = handler(&path, &body);
    let text = reply.to_string();
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )?;
    stream.flush()
}

/// An `/embeddings` endpoint backed by character-trigram hashing, scaled so
/// that clients must normalize. Deliberately different from the in-process
/// hash embedder.
pub struct EmbeddingServer {
    inner: JsonServer,
}

impl EmbeddingServer {
    pub fn start(dim: usize) -> Self {
        let inner = JsonServer::start(move |_, body| {
            let text = body["input"].as_str().unwrap_or("").to_lowercase();
            let chars: Vec<char> = format!("  {text}  ").chars().collect();
            let mut v = vec![0.0f64; dim];
            for w in chars.windows(3) {
                let mut h: u32 = 2_166_136_261;
                for c in w {
                    h ^= *c as u32;
                    h = h.wrapping_mul(16_777_619);
                }
                v[(h as usize) % dim] += 3.0;
            }
            (200, serde_json::json!({ "data": [{ "embedding": v }] }))
        });
        Self { inner }
    }

    pub fn url(&self) -> String {
        self.inner.url()
    }
}

/// A random netlist that passes structural validation, reproducible from
/// `seed`. Mixes cells and top-level decks, every device kind except
/// instances, numeric and placeholder values, `.param` and `.include` cards.
pub fn random_netlist(seed: u64) -> crate::netlist::Netlist {
    use crate::netlist::{Device, DeviceKind, Netlist, Value, GROUND};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut n = Netlist::new(format!("generated {seed}"));
    let reference = if rng.gen_bool(0.5) {
        n = n.with_cell(format!("cell{seed}"), &["inp", "inn", "out", "vdd", "vss"]);
        "vss".to_string()
    } else {
        GROUND.to_string()
    };
    if rng.gen_bool(0.3) {
        n.includes.push("models/generic.lib".into());
    }
    let mut pool: Vec<String> = n.ports.clone();
    pool.push(reference.clone());
    pool.dedup();
    let internal: Vec<String> = (0..rng.gen_range(1..6)).map(|i| format!("n{i}")).collect();
    pool.extend(internal.iter().cloned());

    let symbols = ["w1", "l1", "w2", "rz", "cc", "ib"];
    if rng.gen_bool(0.3) {
        n.params.insert(symbols.choose(&mut rng).unwrap().to_string(), rng.gen_range(1e-6..1e-3));
    }
    let value = |rng: &mut rand_chacha::ChaCha8Rng| -> Value {
        if rng.gen_bool(0.4) {
            Value::Sym(symbols.choose(rng).unwrap().to_string())
        } else {
            let mantissa: f64 = rng.gen_range(1.0..1000.0);
            Value::Num(mantissa * 10f64.powi(rng.gen_range(-15..4)))
        }
    };
    let two = |rng: &mut rand_chacha::ChaCha8Rng, pool: &[String]| -> Vec<String> {
        pool.choose_multiple(rng, 2).cloned().collect()
    };

    let kinds = [DeviceKind::Mosfet, DeviceKind::Resistor, DeviceKind::Capacitor, DeviceKind::Vsource, DeviceKind::Isource];
    for i in 0..rng.gen_range(2..12) {
        let kind = *kinds.choose(&mut rng).unwrap();
        let name = format!("{}{i}", kind.prefix());
        let dev = match kind {
            DeviceKind::Mosfet => {
                let nodes = (0..4).map(|_| pool.choose(&mut rng).unwrap().clone()).collect();
                let model = if rng.gen_bool(0.5) { "nfet" } else { "pfet" };
                let mut d = Device::new(name, kind, nodes).unwrap().with_model(model);
                d = d.with_param("w", value(&mut rng)).with_param("l", value(&mut rng));
                if rng.gen_bool(0.2) {
                    d = d.with_param("m", Value::Num(f64::from(rng.gen_range(1..8))));
                }
                d
            }
            DeviceKind::Resistor | DeviceKind::Capacitor => {
                Device::new(name, kind, two(&mut rng, &pool)).unwrap().with_param("value", value(&mut rng))
            }
            _ => {
                let mut d = Device::new(name, kind, two(&mut rng, &pool)).unwrap().with_param("dc", value(&mut rng));
                if rng.gen_bool(0.3) {
                    d = d.with_param("ac", Value::Num(1.0));
                }
                d
            }
        };
        n.devices.push(dev);
    }

    // Tie every internal node that is touched once, or that sits in a group
    // with no path to the reference or a port, to the reference.
    let mut ties = 0;
    for node in &internal {
        let degree: usize = n.devices.iter().map(|d| d.nodes.iter().filter(|x| *x == node).count()).sum();
        if degree == 1 || (degree > 1 && !reaches_anchor(&n, node, &reference)) {
            let tie = Device::new(format!("rtie{ties}"), DeviceKind::Resistor, vec![node.clone(), reference.clone()])
                .unwrap()
                .with_param("value", Value::Num(1e6));
            n.devices.push(tie);
            ties += 1;
        }
    }
    n
}

fn reaches_anchor(n: &crate::netlist::Netlist, start: &str, reference: &str) -> bool {
    let mut seen = std::collections::BTreeSet::from([start.to_string()]);
    let mut stack = vec![start.to_string()];
    while let Some(node) = stack.pop() {
        if node == reference || node == crate::netlist::GROUND || n.ports.contains(&node) {
            return true;
        }
        for d in n.devices.iter().filter(|d| d.nodes.contains(&node)) {
            for other in &d.nodes {
                if seen.insert(other.clone()) {
                    stack.push(other.clone());
                }
            }
        }
    }
    false
}
