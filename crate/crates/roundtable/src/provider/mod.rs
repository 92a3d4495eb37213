//! Uniform client over chat-completion backends with structured-output
//! enforcement, retries and usage accounting.

mod http;
mod mock;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use roundtable_core::prompt::retry_prompt;
use roundtable_core::{
    resolve_credential, validate_response, CredentialError, OutputSchema, ProviderConfig,
    ProviderKind, ReviewOutput, Usage,
};
use serde::Serialize;
use serde_json::Value;

pub use http::{http_clients_built, HttpBackend, SYSTEM_PROMPT};
pub use mock::{
    mock_tokens, AgentScript, FailureSpec, MockBackend, MockScript, ScriptError, Scripted,
    ScriptedText,
};

/// Raw text and reported token counts from one backend attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError {
    pub message: String,
    pub retryable: bool,
}

impl TransportError {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ProviderError {
    #[error("environment variable `{var}` for provider `{provider}` is unset or empty")]
    AuthMissing { provider: String, var: String },
    #[error("transport error after {attempts} attempt(s): {message}")]
    TransportError { message: String, attempts: u32 },
    #[error("response still invalid after {attempts} attempt(s): {message}")]
    SchemaViolation {
        message: String,
        last_raw: String,
        attempts: u32,
    },
    #[error("provider `{0}` does not accept image inputs")]
    UnsupportedFeature(String),
    #[error("prompt is empty")]
    EmptyPrompt,
}

impl ProviderError {
    pub fn kind(&self) -> &'static str {
        match self {
            ProviderError::AuthMissing { .. } => "auth_missing",
            ProviderError::TransportError { .. } => "transport_error",
            ProviderError::SchemaViolation { .. } => "schema_violation",
            ProviderError::UnsupportedFeature(_) => "unsupported_feature",
            ProviderError::EmptyPrompt => "empty_prompt",
        }
    }
}

/// Identifies a call for the mock script and diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CallKey {
    pub agent: String,
    pub row: usize,
}

impl CallKey {
    pub fn new(agent: impl Into<String>, row: usize) -> Self {
        Self {
            agent: agent.into(),
            row,
        }
    }
}

/// One structured completion request.
#[derive(Debug, Clone)]
pub struct Request<'a> {
    pub key: &'a CallKey,
    pub prompt: &'a str,
    pub images: &'a [PathBuf],
    pub schema: &'a OutputSchema,
    /// Agent-level arguments merged over the provider's.
    pub model_args: &'a BTreeMap<String, Value>,
}

#[derive(Debug, Clone)]
enum Backend {
    Mock(Arc<MockBackend>),
    Http(HttpBackend),
}

/// A configured provider. Cheap to share across tasks behind an `Arc`.
#[derive(Debug, Clone)]
pub struct Provider {
    config: ProviderConfig,
    backend: Backend,
    backoff: Duration,
}

const HTTP_BACKOFF: Duration = Duration::from_millis(500);

impl Provider {
    /// Builds a mock provider around a loaded script.
    pub fn mock(config: ProviderConfig, backend: Arc<MockBackend>) -> Self {
        Self {
            config,
            backend: Backend::Mock(backend),
            backoff: Duration::ZERO,
        }
    }

    /// Builds an HTTP provider; the credential is resolved here, once.
    pub fn http<F>(config: ProviderConfig, env: F) -> Result<Self, ProviderError>
    where
        F: Fn(&str) -> Option<String>,
    {
        let secret = resolve_credential(&config, env).map_err(|e| match e {
            CredentialError::AuthMissing { provider, var } => {
                ProviderError::AuthMissing { provider, var }
            }
            CredentialError::NotApplicable(name) => ProviderError::TransportError {
                message: format!("provider `{name}` is a mock"),
                attempts: 0,
            },
        })?;
        let backend = HttpBackend::new(&config, secret).map_err(|e| ProviderError::TransportError {
            message: e.message,
            attempts: 0,
        })?;
        Ok(Self {
            config,
            backend: Backend::Http(backend),
            backoff: HTTP_BACKOFF,
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn mock_backend(&self) -> Option<&Arc<MockBackend>> {
        match &self.backend {
            Backend::Mock(m) => Some(m),
            Backend::Http(_) => None,
        }
    }

    /// Overrides the base delay of the exponential backoff between attempts.
    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff = base;
        self
    }

    async fn attempt(
        &self,
        req: &Request<'_>,
        prompt: &str,
        attempt: u32,
    ) -> Result<RawResponse, TransportError> {
        match &self.backend {
            Backend::Mock(m) => m.call(&req.key.agent, req.key.row, attempt, prompt).await,
            Backend::Http(h) => {
                let mut args = self.config.model_args.clone();
                args.extend(req.model_args.iter().map(|(k, v)| (k.clone(), v.clone())));
                h.call(prompt, req.images, &args).await
            }
        }
    }

    /// Calls the backend until the response validates against the schema,
    /// feeding each validation error back into the next prompt. At most
    /// `max_retries + 1` attempts are made.
    pub async fn complete_structured(
        &self,
        req: &Request<'_>,
    ) -> Result<(ReviewOutput, Usage), ProviderError> {
        if req.prompt.trim().is_empty() {
            return Err(ProviderError::EmptyPrompt);
        }
        if !req.images.is_empty() && !self.config.supports_images {
            return Err(ProviderError::UnsupportedFeature(self.config.name.clone()));
        }
        let mut usage = Usage::default();
        let mut feedback: Option<String> = None;
        let mut last_raw = String::new();
        let max_attempts = self.config.max_retries + 1;
        for attempt in 0..max_attempts {
            if attempt > 0 && !self.backoff.is_zero() {
                tokio::time::sleep(self.backoff * 2u32.saturating_pow(attempt - 1)).await;
            }
            let prompt = match &feedback {
                Some(err) => retry_prompt(req.prompt, err),
                None => req.prompt.to_string(),
            };
            let raw = match self.attempt(req, &prompt, attempt).await {
                Ok(raw) => raw,
                Err(e) if e.retryable && attempt + 1 < max_attempts => {
                    log::debug!("{}: attempt {} failed: {}", self.config.name, attempt + 1, e.message);
                    continue;
                }
                Err(e) => {
                    return Err(ProviderError::TransportError {
                        message: e.message,
                        attempts: attempt + 1,
                    })
                }
            };
            usage.input_tokens += raw.input_tokens;
            usage.output_tokens += raw.output_tokens;
            match validate_response(&raw.text, req.schema) {
                Ok(out) => {
                    usage.retries_used = attempt;
                    return Ok((out, usage));
                }
                Err(e) => {
                    feedback = Some(e.to_string());
                    last_raw = raw.text;
                }
            }
        }
        Err(ProviderError::SchemaViolation {
            message: feedback.unwrap_or_default(),
            last_raw,
            attempts: max_attempts,
        })
    }
}

/// Whether a provider config talks to the network.
pub fn is_remote(config: &ProviderConfig) -> bool {
    config.kind != ProviderKind::Mock
}
