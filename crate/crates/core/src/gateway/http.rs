//! OpenAI-compatible HTTP backend.
//!
//! Speaks the standard chat-completions JSON protocol. Transient failures
//! (transport errors, 429, 5xx) retry with exponential backoff up to a
//! configured attempt limit; anything else fails immediately.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendKind, ChatRequest, GatewayError};

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay: Duration::from_millis(500),
        }
    }
}

pub struct HttpBackend {
    url: String,
    api_key: String,
    model: String,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireContent,
}

#[derive(Deserialize)]
struct WireContent {
    content: Option<String>,
}

impl HttpBackend {
    /// `endpoint` is the API base (e.g. `https://api.openai.com/v1`); the
    /// chat-completions path is appended unless already present.
    pub fn new(
        endpoint: &str,
        api_key: &str,
        model: &str,
        retry: RetryPolicy,
    ) -> Result<Self, GatewayError> {
        if endpoint.is_empty() {
            return Err(GatewayError::Config("http backend needs an endpoint".into()));
        }
        if api_key.is_empty() {
            return Err(GatewayError::Config(
                "http backend needs a credential (set FLSA_API_KEY)".into(),
            ));
        }
        if model.is_empty() {
            return Err(GatewayError::Config("http backend needs a model name".into()));
        }
        let url = if endpoint.ends_with("/chat/completions") {
            endpoint.to_string()
        } else {
            format!("{}/chat/completions", endpoint.trim_end_matches('/'))
        };
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build();
        Ok(HttpBackend {
            url,
            api_key: api_key.to_string(),
            model: model.to_string(),
            retry,
            agent: ureq::Agent::from(config),
        })
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, AttemptError> {
        let body = WireRequest {
            model: &self.model,
            messages: vec![
                WireMessage {
                    role: "system",
                    content: &request.system,
                },
                WireMessage {
                    role: "user",
                    content: &request.user,
                },
            ],
            temperature: request.temperature,
            top_p: request.top_p,
            max_tokens: request.max_tokens,
            seed: request.seed_hint,
        };
        let response = self
            .agent
            .post(&self.url)
            .header("authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| AttemptError::Retryable(format!("transport: {e}")))?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(AttemptError::Retryable(format!("http status {status}")));
        }
        if status >= 400 {
            return Err(AttemptError::Fatal(GatewayError::Transport(format!(
                "http status {status}"
            ))));
        }
        let parsed: WireResponse = response
            .into_body()
            .read_json()
            .map_err(|e| AttemptError::Fatal(GatewayError::Protocol(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or(AttemptError::Fatal(GatewayError::Protocol(
                "response carried no message content".into(),
            )))
    }
}

enum AttemptError {
    Retryable(String),
    Fatal(GatewayError),
}

impl Backend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut last = String::new();
        for attempt in 0..self.retry.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
            }
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retryable(message)) => last = message,
            }
        }
        Err(GatewayError::RetriesExhausted {
            attempts: self.retry.max_attempts,
            last,
        })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }
}
