use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::embed::{cosine, Embedder};
use super::index;
use super::text::truncate_chars;
use super::RetrievalError;
use crate::llm::{extract_json, LlmBackend, Prompt, Stage};

const MAGIC: &[u8; 4] = b"STKN";

/// Section titles containing any of these words carry no design content.
pub const SECTION_BLOCKLIST: &[&str] =
    &["acknowledgement", "acknowledgment", "references", "bibliography", "funding", "about the author"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeChunk {
    /// `<doc_id>#<section index>`
    pub id: String,
    pub doc_id: String,
    pub section_title: String,
    pub text: String,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeStore {
    pub dimension: usize,
    pub chunks: Vec<KnowledgeChunk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestError {
    pub path: PathBuf,
    pub reason: String,
}

fn blocked(title: &str) -> bool {
    let t = title.to_lowercase();
    SECTION_BLOCKLIST.iter().any(|b| t.contains(b))
}

/// Split a document on `## ` headings. Text before the first heading is ignored.
fn sections(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in text.lines() {
        if let Some(title) = line.strip_prefix("## ") {
            if let Some((t, body)) = current.take() {
                out.push((t, body.join("\n")));
            }
            current = Some((title.trim().to_string(), Vec::new()));
        } else if let Some((_, body)) = current.as_mut() {
            body.push(line);
        }
    }
    if let Some((t, body)) = current {
        out.push((t, body.join("\n")));
    }
    out.into_iter()
        .map(|(t, b)| (t, b.split_whitespace().collect::<Vec<_>>().join(" ")))
        .filter(|(_, b)| !b.is_empty())
        .collect()
}

/// Chunk every `*.txt` in `doc_dir` by section and embed each chunk.
pub fn ingest_documents(
    doc_dir: &Path,
    embedder: &dyn Embedder,
) -> Result<(KnowledgeStore, Vec<IngestError>), RetrievalError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(doc_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    let mut chunks = Vec::new();
    let mut errors = Vec::new();
    for path in files {
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                errors.push(IngestError { path, reason: e.to_string() });
                continue;
            }
        };
        let doc_id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        for (i, (title, body)) in sections(&text).into_iter().enumerate() {
            if blocked(&title) {
                continue;
            }
            let embedding = embedder.embed(&format!("{title}. {body}"))?;
            chunks.push(KnowledgeChunk {
                id: format!("{doc_id}#{i}"),
                doc_id: doc_id.clone(),
                section_title: title,
                text: body,
                embedding,
            });
        }
    }
    Ok((KnowledgeStore { dimension: embedder.dimension(), chunks }, errors))
}

impl KnowledgeStore {
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        index::write_file(path, MAGIC, self.dimension, &self.chunks)
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let (dimension, chunks) = index::read_file(path, MAGIC)?;
        Ok(Self { dimension, chunks })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, RetrievalError> {
        index::encode(MAGIC, self.dimension, &self.chunks)
    }

    /// Top-k chunks for one query, most similar first.
    pub fn search(&self, embedder: &dyn Embedder, query: &str, k: usize) -> Result<Vec<(&KnowledgeChunk, f64)>, RetrievalError> {
        if embedder.dimension() != self.dimension {
            return Err(RetrievalError::DimensionMismatch { index: self.dimension, embedder: embedder.dimension() });
        }
        let q = embedder.embed(query)?;
        let mut scored: Vec<(&KnowledgeChunk, f64)> = self.chunks.iter().map(|c| (c, cosine(&q, &c.embedding))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored.truncate(k);
        Ok(scored)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeResult {
    pub summary: String,
    pub sources: Vec<String>,
    pub sub_queries: Vec<String>,
    /// Set when no knowledge could be retrieved.
    pub warning: Option<String>,
}

/// Expand the query, gather the top-k chunks per sub-query, and summarize them.
pub fn retrieve_knowledge(
    store: &KnowledgeStore,
    embedder: &dyn Embedder,
    query: &str,
    llm: &dyn LlmBackend,
    k: usize,
    budget: usize,
) -> Result<KnowledgeResult, RetrievalError> {
    let query = query.trim();
    if query.is_empty() {
        return Err(RetrievalError::EmptyInput("knowledge query"));
    }
    if store.chunks.is_empty() {
        return Ok(KnowledgeResult {
            summary: String::new(),
            sources: vec![],
            sub_queries: vec![],
            warning: Some("knowledge store is empty".into()),
        });
    }
    let expand = Prompt::new(Stage::Expand)
        .system("Expand the design question into 3 focused sub-queries. Reply as JSON {\"queries\": [...]}.")
        .user(query)
        .payload(serde_json::json!({ "query": query, "m": 3 }));
    let mut sub_queries: Vec<String> = match extract_json(&llm.complete(&expand)?) {
        Ok(v) => v["queries"]
            .as_array()
            .map(|a| a.iter().filter_map(|q| q.as_str().map(str::to_string)).collect())
            .unwrap_or_default(),
        Err(e) => {
            log::warn!("query expansion unusable: {e}");
            Vec::new()
        }
    };
    if sub_queries.is_empty() {
        sub_queries.push(query.to_string());
    }

    let mut picked: Vec<&KnowledgeChunk> = Vec::new();
    for q in &sub_queries {
        for (c, _) in store.search(embedder, q, k)? {
            if !picked.iter().any(|p| p.id == c.id) {
                picked.push(c);
            }
        }
    }
    let chunks: Vec<serde_json::Value> = picked
        .iter()
        .map(|c| serde_json::json!({ "id": c.id, "title": c.section_title, "text": c.text }))
        .collect();
    let context: String = picked.iter().map(|c| format!("[{}] {}: {}", c.id, c.section_title, c.text)).collect::<Vec<_>>().join("\n");
    let summarize = Prompt::new(Stage::Summarize)
        .system(format!("Summarize the excerpts for the question in at most {budget} characters."))
        .user(format!("Question: {query}\n\n{context}"))
        .payload(serde_json::json!({ "query": query, "chunks": chunks, "budget": budget }));
    let summary = truncate_chars(llm.complete(&summarize)?.trim(), budget);
    Ok(KnowledgeResult {
        summary,
        sources: picked.iter().map(|c| c.id.clone()).collect(),
        sub_queries,
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;
    use crate::retrieval::HashEmbedder;

    fn write(dir: &Path, name: &str, text: &str) {
        std::fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn sections_and_blocklist() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.txt", "# Title\npreamble\n## Miller compensation\nA capacitor splits poles.\n## Acknowledgements\nThanks.\n");
        write(dir.path(), "b.txt", "## Acknowledgments\nThanks to all.\n");
        write(dir.path(), "skip.md", "## X\ny\n");
        let (store, errors) = ingest_documents(dir.path(), &HashEmbedder::default()).unwrap();
        assert!(errors.is_empty());
        assert_eq!(store.chunks.len(), 1);
        assert_eq!(store.chunks[0].id, "a#0");
        assert_eq!(store.chunks[0].section_title, "Miller compensation");
    }

    #[test]
    fn unreadable_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.txt", "## S\nbody\n");
        std::fs::write(dir.path().join("bad.txt"), [0xff, 0xfe, 0x00]).unwrap();
        let (store, errors) = ingest_documents(dir.path(), &HashEmbedder::default()).unwrap();
        assert_eq!(store.chunks.len(), 1);
        assert_eq!(errors.len(), 1);
    }

    #[test]
    fn empty_store_warns() {
        let store = KnowledgeStore { dimension: 256, chunks: vec![] };
        let r = retrieve_knowledge(&store, &HashEmbedder::default(), "gain", &ScriptedBackend::new(), 3, 500).unwrap();
        assert!(r.sources.is_empty());
        assert!(r.warning.is_some());
    }

    #[test]
    fn duplicate_hits_collapse() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.txt", "## Only section\nphase margin stability compensation\n");
        let e = HashEmbedder::default();
        let (store, _) = ingest_documents(dir.path(), &e).unwrap();
        let r = retrieve_knowledge(&store, &e, "improve phase margin", &ScriptedBackend::new(), 2, 400).unwrap();
        assert_eq!(r.sub_queries.len(), 3);
        assert_eq!(r.sources, vec!["a#0"]);
        assert!(r.summary.chars().count() <= 400);
    }
}
