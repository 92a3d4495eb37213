//! Running reviewer agents: context resolution, prompt building, provider
//! calls and cost.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use roundtable_core::{
    build_prompt, estimate_cost, AgentSpec, ContextSpec, Decimal, Item, OutputSchema, PromptError,
    ReviewOutput, Usage,
};
use serde::Serialize;

use crate::provider::{CallKey, Provider, ProviderError, Request};

pub const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "webp", "gif"];

/// Dynamic context source, called with the rendered item text.
pub trait ContextLookup: Send + Sync {
    fn lookup(&self, item_text: &str) -> Result<String, String>;
}

impl<F> ContextLookup for F
where
    F: Fn(&str) -> Result<String, String> + Send + Sync,
{
    fn lookup(&self, item_text: &str) -> Result<String, String> {
        self(item_text)
    }
}

/// Runs an external command with the item text on stdin and uses its
/// standard output as context.
#[derive(Debug, Clone)]
pub struct CommandLookup {
    pub program: String,
    pub args: Vec<String>,
    pub working_dir: Option<PathBuf>,
}

impl ContextLookup for CommandLookup {
    fn lookup(&self, item_text: &str) -> Result<String, String> {
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if let Some(dir) = &self.working_dir {
            cmd.current_dir(dir);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| format!("cannot start `{}`: {e}", self.program))?;
        if let Some(mut stdin) = child.stdin.take() {
            stdin
                .write_all(item_text.as_bytes())
                .map_err(|e| format!("cannot write to `{}`: {e}", self.program))?;
        }
        let out = child
            .wait_with_output()
            .map_err(|e| format!("`{}` failed: {e}", self.program))?;
        if !out.status.success() {
            return Err(format!("`{}` exited with {}", self.program, out.status));
        }
        String::from_utf8(out.stdout)
            .map(|s| s.trim_end().to_string())
            .map_err(|_| format!("`{}` wrote non-UTF-8 output", self.program))
    }
}

pub type LookupRegistry = BTreeMap<String, Arc<dyn ContextLookup>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum ImageIssue {
    MissingFile { path: String },
    BadExtension { path: String },
}

/// Checks existence and extension of every path, returning all violations.
pub fn validate_images<P: AsRef<Path>>(paths: &[P]) -> Result<(), Vec<ImageIssue>> {
    let mut issues = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let shown = p.display().to_string();
        if !p.is_file() {
            issues.push(ImageIssue::MissingFile { path: shown.clone() });
        }
        let ext_ok = p
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if !ext_ok {
            issues.push(ImageIssue::BadExtension { path: shown });
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReviewError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("context lookup failed: {0}")]
    ContextLookupFailed(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid image inputs: {}", .0.iter().map(|i| format!("{i:?}")).collect::<Vec<_>>().join(", "))]
    Images(Vec<ImageIssue>),
}

impl ReviewError {
    pub fn kind(&self) -> &'static str {
        match self {
            ReviewError::Provider(e) => e.kind(),
            ReviewError::ContextLookupFailed(_) => "context_lookup_failed",
            ReviewError::Prompt(_) => "prompt_error",
            ReviewError::Images(_) => "invalid_images",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReviewerError {
    #[error("{0}")]
    InvalidAgent(String),
    #[error("agent `{agent}` uses provider `{expected}` but was given `{given}`")]
    ProviderMismatch {
        agent: String,
        expected: String,
        given: String,
    },
    #[error("agent `{agent}`: no context lookup named `{lookup}` is registered")]
    UnknownLookup { agent: String, lookup: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemReview {
    pub output: ReviewOutput,
    pub usage: Usage,
    /// Zero when the provider has no price.
    pub cost: Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewBatch {
    /// Aligned with the input items.
    pub results: Vec<Result<ItemReview, ReviewError>>,
    pub total_cost: Decimal,
}

/// An agent bound to its provider and context source.
#[derive(Clone)]
pub struct Reviewer {
    spec: Arc<AgentSpec>,
    provider: Arc<Provider>,
    lookup: Option<Arc<dyn ContextLookup>>,
    schema: OutputSchema,
}

impl std::fmt::Debug for Reviewer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Reviewer")
            .field("agent", &self.spec.name)
            .field("provider", &self.provider.name())
            .finish()
    }
}

impl Reviewer {
    pub fn new(
        spec: AgentSpec,
        provider: Arc<Provider>,
        lookups: &LookupRegistry,
    ) -> Result<Self, ReviewerError> {
        if let Some(e) = spec.check().into_iter().next() {
            return Err(ReviewerError::InvalidAgent(e.to_string()));
        }
        if spec.provider != provider.name() {
            return Err(ReviewerError::ProviderMismatch {
                agent: spec.name.clone(),
                expected: spec.provider.clone(),
                given: provider.name().to_string(),
            });
        }
        let lookup = match &spec.context {
            ContextSpec::Dynamic { lookup, .. } => Some(lookups.get(lookup).cloned().ok_or_else(|| {
                ReviewerError::UnknownLookup {
                    agent: spec.name.clone(),
                    lookup: lookup.clone(),
                }
            })?),
            _ => None,
        };
        let schema = spec.output_schema();
        Ok(Self {
            spec: Arc::new(spec),
            provider,
            lookup,
            schema,
        })
    }

    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn provider(&self) -> &Arc<Provider> {
        &self.provider
    }

    pub fn schema(&self) -> &OutputSchema {
        &self.schema
    }

    async fn resolve_context(&self, item: &Item) -> Result<String, ReviewError> {
        match (&self.spec.context, &self.lookup) {
            (ContextSpec::Static(text), _) => Ok(text.clone()),
            (ContextSpec::Dynamic { strict, .. }, Some(lookup)) => {
                let lookup = Arc::clone(lookup);
                let text = item.render();
                let result = tokio::task::spawn_blocking(move || lookup.lookup(&text))
                    .await
                    .unwrap_or_else(|e| Err(format!("lookup panicked: {e}")));
                match result {
                    Ok(c) => Ok(c),
                    Err(e) if *strict => Err(ReviewError::ContextLookupFailed(e)),
                    Err(e) => {
                        log::warn!("agent {}: context lookup failed, using none: {e}", self.spec.name);
                        Ok(String::new())
                    }
                }
            }
            _ => Ok(String::new()),
        }
    }

    /// Reviews one item. `row` keys the call for scripted backends.
    pub async fn review_item(
        &self,
        row: usize,
        item: &Item,
        images: &[PathBuf],
    ) -> Result<ItemReview, ReviewError> {
        validate_images(images).map_err(ReviewError::Images)?;
        let context = self.resolve_context(item).await?;
        let prompt = build_prompt(&self.spec, item, &context)?;
        let key = CallKey::new(self.spec.name.clone(), row);
        let req = Request {
            key: &key,
            prompt: &prompt,
            images,
            schema: &self.schema,
            model_args: &self.spec.model_args,
        };
        let (output, usage) = self.provider.complete_structured(&req).await?;
        let cost = self
            .provider
            .config()
            .price
            .map_or(Decimal::ZERO, |p| estimate_cost(&usage, &p));
        Ok(ItemReview { output, usage, cost })
    }

    /// Reviews text-only items with at most `concurrency` calls in flight.
    /// Item `i` is keyed as row `i`; failures stay in their slot.
    pub async fn review_items(&self, items: &[Item], concurrency: usize) -> ReviewBatch {
        let mut slots: Vec<Option<Result<ItemReview, ReviewError>>> = vec![None; items.len()];
        let mut done = stream::iter(items.iter().enumerate())
            .map(|(i, item)| async move { (i, self.review_item(i, item, &[]).await) })
            .buffer_unordered(concurrency.max(1));
        while let Some((i, r)) = done.next().await {
            slots[i] = Some(r);
        }
        let results: Vec<_> = slots.into_iter().map(|s| s.expect("every slot filled")).collect();
        let total_cost = results
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .map(|r| r.cost)
            .sum();
        ReviewBatch { results, total_cost }
    }
}
