use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::text::tokens;
use super::RetrievalError;

pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    /// A unit-norm vector of length [`Embedder::dimension`].
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError>;
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Scale to unit length; the zero vector maps to the first basis vector.
pub fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        v.iter_mut().for_each(|x| *x = 0.0);
        if let Some(first) = v.first_mut() {
            *first = 1.0;
        }
        return v;
    }
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Feature hashing of unigrams and bigrams into a fixed-size signed vector.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    fn add(&self, v: &mut [f64], feature: &str, weight: f64) {
        let h = fnv1a(feature.as_bytes());
        let idx = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[idx] += sign * weight;
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl Embedder for HashEmbedder {
    fn name(&self) -> &str {
        "hash"
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let toks = tokens(text);
        let mut v = vec![0.0; self.dim];
        for t in &toks {
            self.add(&mut v, t, 1.0);
        }
        for pair in toks.windows(2) {
            self.add(&mut v, &format!("{} {}", pair[0], pair[1]), 0.5);
        }
        Ok(normalize(v))
    }
}

/// Settings for an OpenAI-compatible `/embeddings` endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpEmbedderConfig {
    pub base_url: String,
    pub model: String,
    pub dimension: usize,
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for HttpEmbedderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "text-embedding-3-small".into(),
            dimension: 1536,
            api_key_env: "STRATA_API_KEY".into(),
            timeout_secs: 60,
        }
    }
}

pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Self { config, agent }
    }
}

impl Embedder for HttpEmbedder {
    fn name(&self) -> &str {
        "http"
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let url = format!("{}/embeddings", self.config.base_url.trim_end_matches('/'));
        let mut req = self.agent.post(&url);
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::json!({ "model": self.config.model, "input": text });
        let v: serde_json::Value = req
            .send_json(&body)
            .map_err(|e| RetrievalError::Embed(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| RetrievalError::Embed(e.to_string()))?;
        let raw: Vec<f64> = v["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| RetrievalError::Embed("response has no data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| RetrievalError::Embed("non-numeric embedding".into())))
            .collect::<Result<_, _>>()?;
        if raw.len() != self.config.dimension {
            return Err(RetrievalError::Embed(format!(
                "expected dimension {}, endpoint returned {}",
                self.config.dimension,
                raw.len()
            )));
        }
        Ok(normalize(raw))
    }
}
