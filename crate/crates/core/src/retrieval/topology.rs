use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::embed::{cosine, Embedder};
use super::index;
use super::text::split_sentences;
use super::RetrievalError;
use crate::llm::{LlmBackend, Prompt, Stage};
use crate::netlist::{self, Netlist};

const MAGIC: &[u8; 4] = b"STTP";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyEntry {
    pub id: String,
    /// Two sentences: architecture style, then stage structure.
    pub description: String,
    pub embedding: Vec<f64>,
    #[serde(with = "netlist_text")]
    pub netlist: Netlist,
}

mod netlist_text {
    use crate::netlist::{parse, Netlist};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &Netlist, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&n.serialize())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Netlist, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub entry: TopologyEntry,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyDb {
    pub dimension: usize,
    pub entries: Vec<TopologyEntry>,
}

fn load_entry(dir: &Path, embedder: &dyn Embedder) -> Result<TopologyEntry, String> {
    let id = dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
    let text = std::fs::read_to_string(dir.join("netlist.sp")).map_err(|e| format!("netlist.sp: {e}"))?;
    let description =
        std::fs::read_to_string(dir.join("description.txt")).map_err(|e| format!("description.txt: {e}"))?;
    let description = description.split_whitespace().collect::<Vec<_>>().join(" ");
    let sentences = split_sentences(&description).len();
    if sentences != 2 {
        return Err(format!("description has {sentences} sentences, expected 2"));
    }
    let netlist = netlist::parse(&text).map_err(|e| format!("parse: {e}"))?;
    let issues = netlist::validate(&netlist);
    if !issues.is_empty() {
        let list: Vec<String> = issues.iter().map(ToString::to_string).collect();
        return Err(format!("validation: {}", list.join("; ")));
    }
    let embedding = embedder.embed(&description).map_err(|e| e.to_string())?;
    Ok(TopologyEntry { id, description, embedding, netlist })
}

/// Embed every `<id>/description.txt` under `corpus_dir` as the key for
/// `<id>/netlist.sp`. Structurally invalid entries are rejected, not fatal.
pub fn build_topology_db(
    corpus_dir: &Path,
    embedder: &dyn Embedder,
) -> Result<(TopologyDb, Vec<Rejection>), RetrievalError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(corpus_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut entries = Vec::new();
    let mut rejections = Vec::new();
    for dir in dirs {
        match load_entry(&dir, embedder) {
            Ok(e) => entries.push(e),
            Err(reason) => {
                let id = dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                log::warn!("rejected topology {id}: {reason}");
                rejections.push(Rejection { id, reason });
            }
        }
    }
    if entries.is_empty() {
        return Err(RetrievalError::NoValidEntries(rejections.len()));
    }
    Ok((TopologyDb { dimension: embedder.dimension(), entries }, rejections))
}

impl TopologyDb {
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        index::write_file(path, MAGIC, self.dimension, &self.entries)
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let (dimension, entries) = index::read_file(path, MAGIC)?;
        Ok(Self { dimension, entries })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, RetrievalError> {
        index::encode(MAGIC, self.dimension, &self.entries)
    }

    pub fn get(&self, id: &str) -> Option<&TopologyEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Top-k entries by cosine similarity to the embedded description.
    pub fn query(&self, embedder: &dyn Embedder, description: &str, k: usize) -> Result<Vec<Candidate>, RetrievalError> {
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyDb);
        }
        if k == 0 {
            return Err(RetrievalError::EmptyInput("k must be at least 1"));
        }
        if embedder.dimension() != self.dimension {
            return Err(RetrievalError::DimensionMismatch { index: self.dimension, embedder: embedder.dimension() });
        }
        let q = embedder.embed(description)?;
        let mut scored: Vec<Candidate> = self
            .entries
            .iter()
            .map(|e| Candidate { entry: e.clone(), similarity: cosine(&q, &e.embedding) })
            .collect();
        // stable: equal similarities keep corpus order
        scored.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
        scored.truncate(k);
        Ok(scored)
    }
}

/// Reduce a free-form architecture description to two sentences.
pub fn condense_description(text: &str, llm: &dyn LlmBackend) -> Result<String, RetrievalError> {
    let sentences = split_sentences(text);
    if sentences.is_empty() {
        return Err(RetrievalError::EmptyInput("description"));
    }
    if sentences.len() <= 2 {
        return Ok(sentences.join(" "));
    }
    let prompt = Prompt::new(Stage::Condense)
        .system("Condense the circuit description into exactly two sentences: the architecture style, then the internal stage structure and signal flow.")
        .user(text)
        .payload(serde_json::json!({ "text": text }));
    let out = llm.complete(&prompt)?;
    let mut condensed = split_sentences(&out);
    if condensed.is_empty() {
        condensed = sentences;
    }
    condensed.truncate(2);
    Ok(condensed.join(" "))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    /// The candidate description should contain the term.
    Require(String),
    /// The candidate description should not contain the term.
    Forbid(String),
}

impl Constraint {
    pub fn satisfied_by(&self, description: &str) -> bool {
        let d = description.to_lowercase();
        match self {
            Constraint::Require(t) => d.contains(&t.to_lowercase()),
            Constraint::Forbid(t) => !d.contains(&t.to_lowercase()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RerankRule {
    /// Any of these phrases in the agent's description triggers the rule.
    pub when: Vec<String>,
    #[serde(default)]
    pub prefer: Vec<String>,
    #[serde(default)]
    pub avoid: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RerankRules {
    pub rules: Vec<RerankRule>,
}

impl RerankRules {
    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| RetrievalError::Index(format!("{}: {e}", path.display())))
    }

    pub fn constraints(&self, description: &str) -> Vec<Constraint> {
        let d = description.to_lowercase();
        let mut out = Vec::new();
        for rule in &self.rules {
            if rule.when.iter().any(|w| d.contains(&w.to_lowercase())) {
                out.extend(rule.prefer.iter().cloned().map(Constraint::Require));
                out.extend(rule.avoid.iter().cloned().map(Constraint::Forbid));
            }
        }
        out
    }
}

/// Stable partition by number of satisfied constraints, most first.
pub fn rerank(mut candidates: Vec<Candidate>, constraints: &[Constraint]) -> Vec<Candidate> {
    if constraints.is_empty() {
        return candidates;
    }
    candidates.sort_by_cached_key(|c| {
        std::cmp::Reverse(constraints.iter().filter(|k| k.satisfied_by(&c.entry.description)).count())
    });
    candidates
}
