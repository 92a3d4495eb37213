//! Provider configuration and credential resolution.
//!
//! Only the data lives here; the transports are in the `roundtable` crate.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use serde_json::Value;
use thiserror::Error;

use crate::cost::Price;
use crate::table::is_identifier;

pub const DEFAULT_MAX_RETRIES: u32 = 3;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    /// Any server speaking the chat-completions wire format, selected by
    /// `base_url` (hosted APIs and local model servers alike).
    OpenaiCompatible,
    /// Deterministic scripted backend.
    Mock,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::OpenaiCompatible => "openai_compatible",
            ProviderKind::Mock => "mock",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub name: String,
    pub kind: ProviderKind,
    pub model: String,
    pub base_url: Option<String>,
    pub api_key_env: Option<String>,
    pub model_args: BTreeMap<String, Value>,
    pub price: Option<Price>,
    pub max_retries: u32,
    pub timeout: Duration,
    pub supports_images: bool,
    /// Path (or other reference) to the mock script; mock providers only.
    pub script: Option<String>,
}

impl ProviderConfig {
    pub fn mock(name: impl Into<String>, script: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ProviderKind::Mock,
            model: String::from("mock"),
            base_url: None,
            api_key_env: None,
            model_args: BTreeMap::new(),
            price: None,
            max_retries: DEFAULT_MAX_RETRIES,
            timeout: DEFAULT_TIMEOUT,
            supports_images: true,
            script: Some(script.into()),
        }
    }

    pub fn openai_compatible(name: impl Into<String>, model: impl Into<String>) -> Self {
        let model = model.into();
        Self {
            name: name.into(),
            kind: ProviderKind::OpenaiCompatible,
            api_key_env: Some(default_api_key_env(&model).into()),
            model,
            base_url: None,
            model_args: BTreeMap::new(),
            price: None,
            max_retries: DEFAULT_MAX_RETRIES,
            timeout: DEFAULT_TIMEOUT,
            supports_images: false,
            script: None,
        }
    }

    /// Returns every violated invariant.
    pub fn check(&self) -> Vec<ProviderConfigError> {
        let mut errors = Vec::new();
        if !is_identifier(&self.name) {
            errors.push(ProviderConfigError::BadName(self.name.clone()));
        }
        match self.kind {
            ProviderKind::OpenaiCompatible => {
                if self.api_key_env.as_deref().is_none_or(str::is_empty) {
                    errors.push(ProviderConfigError::MissingApiKeyEnv(self.name.clone()));
                }
                if self.model.is_empty() {
                    errors.push(ProviderConfigError::MissingModel(self.name.clone()));
                }
            }
            ProviderKind::Mock => {
                if self.script.as_deref().is_none_or(str::is_empty) {
                    errors.push(ProviderConfigError::MissingScript(self.name.clone()));
                }
            }
        }
        if self.price.is_some_and(|p| !p.is_valid()) {
            errors.push(ProviderConfigError::NegativePrice(self.name.clone()));
        }
        errors
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderConfigError {
    #[error("provider name `{0}` is not a valid identifier")]
    BadName(String),
    #[error("provider `{0}`: openai_compatible providers need api_key_env")]
    MissingApiKeyEnv(String),
    #[error("provider `{0}`: model is required")]
    MissingModel(String),
    #[error("provider `{0}`: mock providers need a script")]
    MissingScript(String),
    #[error("provider `{0}`: prices must be nonnegative")]
    NegativePrice(String),
}

/// Conventional credential variable for a model identifier.
pub fn default_api_key_env(model: &str) -> &'static str {
    let m = model.to_ascii_lowercase();
    if m.starts_with("gemini") {
        "GEMINI_API_KEY"
    } else if m.starts_with("anthropic/") || m.starts_with("claude") {
        "ANTHROPIC_API_KEY"
    } else if m.starts_with("groq/") {
        "GROQ_API_KEY"
    } else {
        "OPENAI_API_KEY"
    }
}

/// A credential value. Its `Debug` and `Display` output is redacted.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

impl fmt::Display for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("***")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CredentialError {
    #[error("environment variable `{var}` for provider `{provider}` is unset or empty")]
    AuthMissing { provider: String, var: String },
    #[error("provider `{0}` is a mock and takes no credential")]
    NotApplicable(String),
}

/// Looks up the provider's credential in `env`. The value never appears in
/// the returned error.
pub fn resolve_credential<F>(config: &ProviderConfig, env: F) -> Result<Secret, CredentialError>
where
    F: Fn(&str) -> Option<String>,
{
    if config.kind == ProviderKind::Mock {
        return Err(CredentialError::NotApplicable(config.name.clone()));
    }
    let var = config.api_key_env.clone().unwrap_or_default();
    match env(&var) {
        Some(v) if !v.is_empty() => Ok(Secret(v)),
        _ => Err(CredentialError::AuthMissing {
            provider: config.name.clone(),
            var,
        }),
    }
}
