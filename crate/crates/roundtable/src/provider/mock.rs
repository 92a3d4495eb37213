//! Scripted backend used by tests, fixtures and offline runs.
//!
//! A script maps `(agent, row)` to raw response text. Lookups depend only on
//! the key and the attempt number, so runs are reproducible at any
//! concurrency.
//!
//! ```json
//! {
//!   "default": {"reasoning": "ok", "evaluation": 3, "certainty": 50},
//!   "agents": {
//!     "Alice": {
//!       "default": "...",
//!       "rows": {"0": {"reasoning": "r", "evaluation": 5, "certainty": 90}},
//!       "failures": {"2": {"attempts": 1, "response": "not json"}}
//!     }
//!   },
//!   "delay_ms": 0,
//!   "jitter_ms": 5,
//!   "seed": 7
//! }
//! ```
//!
//! A response is either a string (used verbatim) or any other JSON value
//! (serialized compactly). A failure entry without `attempts` fails every
//! attempt; `transport_error` makes the attempt fail at the transport level
//! instead of returning text.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use serde::Deserialize;
use serde_json::Value;

use super::{RawResponse, TransportError};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ScriptedText {
    Text(String),
    Json(Value),
}

impl ScriptedText {
    pub fn render(&self) -> String {
        match self {
            ScriptedText::Text(s) => s.clone(),
            ScriptedText::Json(v) => v.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSpec {
    /// Number of leading attempts that fail; absent means all of them.
    #[serde(default)]
    pub attempts: Option<u32>,
    #[serde(default)]
    pub response: Option<ScriptedText>,
    #[serde(default)]
    pub transport_error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentScript {
    #[serde(default)]
    pub default: Option<ScriptedText>,
    #[serde(default)]
    pub rows: BTreeMap<usize, ScriptedText>,
    #[serde(default)]
    pub failures: BTreeMap<usize, FailureSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub default: Option<ScriptedText>,
    #[serde(default)]
    pub agents: BTreeMap<String, AgentScript>,
    #[serde(default)]
    pub delay_ms: u64,
    #[serde(default)]
    pub jitter_ms: u64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("cannot read mock script {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid mock script {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

/// What the script says about one attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scripted {
    Text(String),
    Transport(String),
    Missing,
}

impl MockScript {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: shown.clone(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| ScriptError::Parse { path: shown, source })
    }

    /// Fixed response for every key.
    pub fn constant(response: impl Into<String>) -> Self {
        Self {
            default: Some(ScriptedText::Text(response.into())),
            ..Self::default()
        }
    }

    pub fn with_row(mut self, agent: &str, row: usize, response: impl Into<String>) -> Self {
        self.agents
            .entry(agent.to_string())
            .or_default()
            .rows
            .insert(row, ScriptedText::Text(response.into()));
        self
    }

    pub fn with_failure(mut self, agent: &str, row: usize, failure: FailureSpec) -> Self {
        self.agents
            .entry(agent.to_string())
            .or_default()
            .failures
            .insert(row, failure);
        self
    }

    pub fn with_jitter(mut self, jitter_ms: u64, seed: u64) -> Self {
        self.jitter_ms = jitter_ms;
        self.seed = seed;
        self
    }

    /// Response for `attempt` (0-based) of the call keyed by `(agent, row)`.
    pub fn lookup(&self, agent: &str, row: usize, attempt: u32) -> Scripted {
        let script = self.agents.get(agent);
        if let Some(f) = script.and_then(|s| s.failures.get(&row)) {
            if f.attempts.is_none_or(|k| attempt < k) {
                if let Some(msg) = &f.transport_error {
                    return Scripted::Transport(msg.clone());
                }
                return Scripted::Text(f.response.as_ref().map(ScriptedText::render).unwrap_or_default());
            }
        }
        script
            .and_then(|s| s.rows.get(&row).or(s.default.as_ref()))
            .or(self.default.as_ref())
            .map_or(Scripted::Missing, |t| Scripted::Text(t.render()))
    }

    fn delay(&self, agent: &str, row: usize, attempt: u32) -> Duration {
        let mut ms = self.delay_ms;
        if self.jitter_ms > 0 {
            let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
            for b in agent.bytes() {
                h = h.rotate_left(5) ^ u64::from(b);
                h = h.wrapping_mul(0x100_0000_01b3);
            }
            h ^= (row as u64).wrapping_mul(0xff51_afd7_ed55_8ccd) ^ u64::from(attempt);
            let mut rng = rand::rngs::StdRng::seed_from_u64(h);
            ms += rng.gen_range(0..=self.jitter_ms);
        }
        Duration::from_millis(ms)
    }
}

/// Token count the mock reports for a text: `ceil(chars / 4)`.
pub fn mock_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Mock backend with instrumentation: in-flight and per-key attempt counters.
#[derive(Debug, Default)]
pub struct MockBackend {
    script: MockScript,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    calls: AtomicUsize,
    attempts: Mutex<HashMap<(String, usize), u32>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            ..Self::default()
        }
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    /// Highest number of simultaneous calls observed so far.
    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.load(Ordering::SeqCst)
    }

    /// Total backend attempts across all keys.
    pub fn total_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Attempts made for one key.
    pub fn attempts(&self, agent: &str, row: usize) -> u32 {
        let map = self.attempts.lock().expect("attempt counter poisoned");
        map.get(&(agent.to_string(), row)).copied().unwrap_or(0)
    }

    pub(crate) async fn call(
        &self,
        agent: &str,
        row: usize,
        attempt: u32,
        prompt: &str,
    ) -> Result<RawResponse, TransportError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        self.calls.fetch_add(1, Ordering::SeqCst);
        *self
            .attempts
            .lock()
            .expect("attempt counter poisoned")
            .entry((agent.to_string(), row))
            .or_insert(0) += 1;

        let delay = self.script.delay(agent, row, attempt);
        if delay.is_zero() {
            tokio::task::yield_now().await;
        } else {
            tokio::time::sleep(delay).await;
        }

        let result = match self.script.lookup(agent, row, attempt) {
            Scripted::Text(text) => Ok(RawResponse {
                input_tokens: mock_tokens(prompt),
                output_tokens: mock_tokens(&text),
                text,
            }),
            Scripted::Transport(message) => Err(TransportError::retryable(message)),
            Scripted::Missing => Err(TransportError::fatal(format!(
                "mock script has no response for agent `{agent}` row {row}"
            ))),
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}
