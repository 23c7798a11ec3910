//! Language-model backends behind one synchronous interface.
//!
//! Agents talk to a backend through [`Prompt`]s that carry both the rendered
//! message list and a machine-readable `payload`. Live backends only see the
//! messages; the scripted backend answers from the payload so that replay is a
//! pure function of the prompt.

mod http;
mod scripted;

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig};
pub use scripted::ScriptedBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Select,
    Refine,
    Size,
    Reflect,
    Condense,
    Expand,
    Summarize,
    Fuse,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Select => "select",
            Stage::Refine => "refine",
            Stage::Size => "size",
            Stage::Reflect => "reflect",
            Stage::Condense => "condense",
            Stage::Expand => "expand",
            Stage::Summarize => "summarize",
            Stage::Fuse => "fuse",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub stage: Stage,
    pub iteration: u32,
    pub task_id: String,
    pub messages: Vec<Message>,
    /// Structured inputs the messages were rendered from.
    #[serde(default)]
    pub payload: serde_json::Value,
}

impl Prompt {
    pub fn new(stage: Stage) -> Self {
        Self {
            stage,
            iteration: 1,
            task_id: String::new(),
            messages: Vec::new(),
            payload: serde_json::Value::Null,
        }
    }

    pub fn iteration(mut self, iteration: u32) -> Self {
        self.iteration = iteration;
        self
    }

    pub fn task(mut self, task_id: impl Into<String>) -> Self {
        self.task_id = task_id.into();
        self
    }

    pub fn system(mut self, content: impl Into<String>) -> Self {
        self.messages.push(Message { role: Role::System, content: content.into() });
        self
    }

    pub fn user(mut self, content: impl Into<String>) -> Self {
        self.messages.push(Message { role: Role::User, content: content.into() });
        self
    }

    pub fn payload(mut self, payload: serde_json::Value) -> Self {
        self.payload = payload;
        self
    }

    /// All message contents joined by blank lines.
    pub fn text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n\n")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("missing credentials: environment variable {0} is not set")]
    Auth(String),
    #[error("no scripted response for {0}")]
    NoResponse(String),
}

pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt: Prompt,
    pub response: Result<String, String>,
}

/// Wraps a backend and keeps every prompt and response it sees.
pub struct Recorder<B> {
    inner: B,
    log: Mutex<Vec<Exchange>>,
}

impl<B: LlmBackend> Recorder<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("recorder lock").clone()
    }

    pub fn prompts(&self, stage: Stage) -> Vec<Prompt> {
        self.exchanges().into_iter().filter(|e| e.prompt.stage == stage).map(|e| e.prompt).collect()
    }

    /// Remove and return everything recorded so far.
    pub fn drain(&self) -> Vec<Exchange> {
        std::mem::take(&mut *self.log.lock().expect("recorder lock"))
    }
}

impl<B: LlmBackend> LlmBackend for Recorder<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let out = self.inner.complete(prompt);
        self.log.lock().expect("recorder lock").push(Exchange {
            prompt: prompt.clone(),
            response: out.clone().map_err(|e| e.to_string()),
        });
        out
    }
}

/// Extract the first JSON value from a response, tolerating code fences and
/// surrounding prose.
pub fn extract_json(text: &str) -> Result<serde_json::Value, LlmError> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Ok(v);
    }
    let start = trimmed
        .find(['{', '['])
        .ok_or_else(|| LlmError::Malformed("no JSON object in response".into()))?;
    let mut stream = serde_json::Deserializer::from_str(&trimmed[start..]).into_iter::<serde_json::Value>();
    match stream.next() {
        Some(Ok(v)) => Ok(v),
        Some(Err(e)) => Err(LlmError::Malformed(e.to_string())),
        None => Err(LlmError::Malformed("empty response".into())),
    }
}
