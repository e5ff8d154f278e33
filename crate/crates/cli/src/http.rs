use std::time::{Duration, Instant};

use serde_json::{json, Value};
use t3_core::pipeline::{Backend, BackendError, LlmRequest, LlmResponse, Usage};

/// OpenAI-style chat-completions endpoint.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(endpoint: String, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            agent,
            endpoint,
            api_key,
        }
    }
}

pub fn parse_completion(body: &Value) -> Result<(String, Usage), BackendError> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Fatal("response has no choices[0].message.content".into()))?;
    let usage = Usage {
        prompt_tokens: body.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: body
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    };
    Ok((text.to_string(), usage))
}

impl Backend for HttpBackend {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError> {
        let body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let started = Instant::now();
        let mut resp = call
            .send_json(&body)
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            429 => {
                let retry_after = resp
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.trim().parse::<u64>().ok())
                    .map(Duration::from_secs);
                return Err(BackendError::RateLimited { retry_after });
            }
            500..=599 => return Err(BackendError::Transient(format!("HTTP {status}"))),
            _ => {
                let detail = resp.body_mut().read_to_string().unwrap_or_default();
                return Err(BackendError::Fatal(format!("HTTP {status}: {}", detail.trim())));
            }
        }
        let json: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transient(format!("reading response: {e}")))?;
        let (text, usage) = parse_completion(&json)?;
        Ok(LlmResponse {
            text,
            usage,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}
