//! OpenAI-compatible chat-completions transport.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use base64::Engine as _;
use roundtable_core::{ProviderConfig, Secret};
use serde_json::{json, Map, Value};

use super::{RawResponse, TransportError};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

/// System message sent with every request.
pub const SYSTEM_PROMPT: &str =
    "You are a meticulous reviewer. Reply with a single JSON object and nothing else.";

static CLIENTS_BUILT: AtomicUsize = AtomicUsize::new(0);

/// Number of HTTP clients constructed by this process.
pub fn http_clients_built() -> usize {
    CLIENTS_BUILT.load(Ordering::SeqCst)
}

#[derive(Clone)]
pub struct HttpBackend {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    key: Secret,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("key", &self.key)
            .finish()
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/jpeg",
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl HttpBackend {
    pub fn new(config: &ProviderConfig, key: Secret) -> Result<Self, TransportError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| TransportError::fatal(format!("cannot build HTTP client: {e}")))?;
        CLIENTS_BUILT.fetch_add(1, Ordering::SeqCst);
        let base = config.base_url.as_deref().unwrap_or(DEFAULT_BASE_URL);
        Ok(Self {
            client,
            endpoint: format!("{}/chat/completions", base.trim_end_matches('/')),
            model: config.model.clone(),
            key,
        })
    }

    fn body(
        &self,
        prompt: &str,
        images: &[PathBuf],
        model_args: &BTreeMap<String, Value>,
    ) -> Result<Value, TransportError> {
        let user = if images.is_empty() {
            Value::String(prompt.to_string())
        } else {
            let mut parts = vec![json!({"type": "text", "text": prompt})];
            for path in images {
                let bytes = std::fs::read(path).map_err(|e| {
                    TransportError::fatal(format!("cannot read image {}: {e}", path.display()))
                })?;
                let data = base64::engine::general_purpose::STANDARD.encode(bytes);
                parts.push(json!({
                    "type": "image_url",
                    "image_url": {"url": format!("data:{};base64,{data}", mime_for(path))}
                }));
            }
            Value::Array(parts)
        };
        let mut body = Map::new();
        for (k, v) in model_args {
            body.insert(k.clone(), v.clone());
        }
        body.insert("model".into(), Value::String(self.model.clone()));
        body.insert(
            "messages".into(),
            json!([
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": user}
            ]),
        );
        Ok(Value::Object(body))
    }

    pub(crate) async fn call(
        &self,
        prompt: &str,
        images: &[PathBuf],
        model_args: &BTreeMap<String, Value>,
    ) -> Result<RawResponse, TransportError> {
        let body = self.body(prompt, images, model_args)?;
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(self.key.expose())
            .json(&body)
            .send()
            .await
            .map_err(|e| TransportError::retryable(e.without_url().to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| TransportError::retryable(e.without_url().to_string()))?;
        if !status.is_success() {
            let message = format!("HTTP {status}: {}", truncate(&text, 300));
            let retryable = status.is_server_error()
                || matches!(status.as_u16(), 408 | 409 | 429);
            return Err(TransportError { message, retryable });
        }
        parse_completion(&text)
    }
}

/// Extracts the first choice's content and the usage counts.
pub(crate) fn parse_completion(text: &str) -> Result<RawResponse, TransportError> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| TransportError::retryable(format!("malformed completion body: {e}")))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::retryable("completion has no message content"))?;
    let count = |p: &str| v.pointer(p).and_then(Value::as_u64).unwrap_or(0);
    Ok(RawResponse {
        text: content.to_string(),
        input_tokens: count("/usage/prompt_tokens"),
        output_tokens: count("/usage/completion_tokens"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_content_and_usage() {
        let r = parse_completion(
            r#"{"choices":[{"message":{"role":"assistant","content":"{\"a\":1}"}}],
                "usage":{"prompt_tokens":12,"completion_tokens":3}}"#,
        )
        .unwrap();
        assert_eq!(r.text, r#"{"a":1}"#);
        assert_eq!((r.input_tokens, r.output_tokens), (12, 3));
        assert!(parse_completion(r#"{"choices":[]}"#).is_err());
    }

    #[test]
    fn request_body_shape() {
        let mut config = ProviderConfig::openai_compatible("p", "gpt-4o-mini");
        config.base_url = Some("http://localhost:8000/v1/".into());
        let b = HttpBackend::new(&config, Secret::new("k")).unwrap();
        assert_eq!(b.endpoint, "http://localhost:8000/v1/chat/completions");
        let mut args = BTreeMap::new();
        args.insert("temperature".to_string(), json!(0.1));
        let body = b.body("hi", &[], &args).unwrap();
        assert_eq!(body["model"], "gpt-4o-mini");
        assert_eq!(body["temperature"], 0.1);
        assert_eq!(body["messages"][1]["content"], "hi");
        assert!(!format!("{b:?}").contains("\"k\""));
    }
}
