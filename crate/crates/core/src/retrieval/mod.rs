//! Topology candidates and design knowledge, both served from embedding indices.

mod embed;
pub mod index;
mod knowledge;
pub mod text;
mod topology;

use thiserror::Error;

pub use embed::{cosine, normalize, Embedder, HashEmbedder, HttpEmbedder, HttpEmbedderConfig};
pub use knowledge::{
    ingest_documents, retrieve_knowledge, IngestError, KnowledgeChunk, KnowledgeResult, KnowledgeStore,
    SECTION_BLOCKLIST,
};
pub use topology::{
    build_topology_db, condense_description, rerank, Candidate, Constraint, Rejection, RerankRule, RerankRules,
    TopologyDb, TopologyEntry,
};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("embedding failed: {0}")]
    Embed(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("topology database is empty")]
    EmptyDb,
    #[error("no valid topologies in corpus ({0} rejected)")]
    NoValidEntries(usize),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("language model error: {0}")]
    Llm(#[from] crate::llm::LlmError),
    #[error("embedding dimension mismatch: index {index}, embedder {embedder}")]
    DimensionMismatch { index: usize, embedder: usize },
}
