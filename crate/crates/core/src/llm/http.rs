use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{LlmBackend, LlmError, Prompt, Role};

/// Connection settings for an OpenAI-compatible chat completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub temperature: f64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: "STRATA_API_KEY".into(),
            timeout_secs: 120,
            max_attempts: 3,
            backoff_ms: 500,
            temperature: 0.0,
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    name: String,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let name = format!("http:{}", config.model);
        Self { config, agent, name }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &serde_json::Value, key: &str) -> Result<String, LlmError> {
        let mut resp = self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Status { status, body: text });
        }
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| LlmError::Malformed(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Malformed("response has no choices[0].message.content".into()))
    }
}

fn retryable(e: &LlmError) -> bool {
    match e {
        LlmError::Transport(_) => true,
        LlmError::Status { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl LlmBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let key = std::env::var(&self.config.api_key_env).map_err(|_| LlmError::Auth(self.config.api_key_env.clone()))?;
        let messages: Vec<serde_json::Value> = prompt
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                serde_json::json!({ "role": role, "content": m.content })
            })
            .collect();
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        let attempts = self.config.max_attempts.max(1);
        let mut last = None;
        for i in 0..attempts {
            if i > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (i - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(&body, &key) {
                Ok(text) => return Ok(text),
                Err(e) if retryable(&e) => {
                    log::warn!("{} attempt {}/{} failed: {e}", self.name, i + 1, attempts);
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| LlmError::Transport("no attempts made".into())))
    }
}
