use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde_json::json;

use crate::llm::{LlmBackend, LlmError, Prompt};

/// Appends every prompt and raw response to a JSON-lines file.
pub struct Transcript<'a> {
    inner: &'a dyn LlmBackend,
    file: Mutex<File>,
}

impl<'a> Transcript<'a> {
    pub fn create(inner: &'a dyn LlmBackend, path: &Path) -> std::io::Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        Ok(Self { inner, file: Mutex::new(file) })
    }
}

impl LlmBackend for Transcript<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let out = self.inner.complete(prompt);
        let line = json!({
            "prompt": prompt,
            "response": out.as_ref().ok(),
            "error": out.as_ref().err().map(ToString::to_string),
        });
        let mut f = self.file.lock().expect("transcript lock");
        if let Err(e) = writeln!(f, "{line}") {
            log::warn!("transcript write failed: {e}");
        }
        out
    }
}
