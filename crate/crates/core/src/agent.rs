//! Reviewer agent specifications and the output schema each kind produces.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde_json::Value;
use thiserror::Error;

use crate::prompt::{placeholders, CUSTOM_BUILTIN_VARS};
use crate::schema::{FieldKind, OutputSchema, SchemaError};
use crate::table::is_identifier;

/// Certainty is reported on an integer 0–100 scale.
pub const CERTAINTY_RANGE: (i64, i64) = (0, 100);
/// Title/abstract evaluations use a 5-point scale.
pub const EVALUATION_RANGE: (i64, i64) = (1, 5);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Reasoning {
    #[default]
    Brief,
    Cot,
}

impl Reasoning {
    pub fn as_str(self) -> &'static str {
        match self {
            Reasoning::Brief => "brief",
            Reasoning::Cot => "cot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoringSpec {
    pub scoring_task: String,
    pub scoring_set: Vec<i64>,
    pub scoring_rules: String,
}

impl ScoringSpec {
    /// Sorted, deduplicated scoring set.
    pub fn normalized_set(&self) -> Vec<i64> {
        let mut s = self.scoring_set.clone();
        s.sort_unstable();
        s.dedup();
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TitleAbstractSpec {
    pub inclusion_criteria: String,
    pub exclusion_criteria: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractionKey {
    pub name: String,
    pub kind: FieldKind,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractionSpec {
    pub keys: Vec<AbstractionKey>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CustomSpec {
    pub prompt_template: String,
    pub response_schema: OutputSchema,
    pub input_description: String,
    /// Extra template variables declared on the agent.
    pub variables: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentKind {
    Scoring(ScoringSpec),
    TitleAbstract(TitleAbstractSpec),
    Abstraction(AbstractionSpec),
    Custom(CustomSpec),
}

impl AgentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::Scoring(_) => "scoring",
            AgentKind::TitleAbstract(_) => "title_abstract",
            AgentKind::Abstraction(_) => "abstraction",
            AgentKind::Custom(_) => "custom",
        }
    }
}

/// Where an agent's additional context comes from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum ContextSpec {
    #[default]
    None,
    Static(String),
    /// Resolved per item by a named lookup registered with the runtime. When
    /// `strict` is false a failing lookup yields empty context.
    Dynamic { lookup: String, strict: bool },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotExample {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub name: String,
    pub provider: String,
    pub backstory: String,
    /// Only consulted by scoring and title/abstract agents.
    pub reasoning: Reasoning,
    pub context: ContextSpec,
    pub examples: Vec<FewShotExample>,
    pub kind: AgentKind,
    pub model_args: BTreeMap<String, Value>,
}

impl AgentSpec {
    pub fn new(name: impl Into<String>, provider: impl Into<String>, kind: AgentKind) -> Self {
        Self {
            name: name.into(),
            provider: provider.into(),
            backstory: String::new(),
            reasoning: Reasoning::Brief,
            context: ContextSpec::None,
            examples: Vec::new(),
            kind,
            model_args: BTreeMap::new(),
        }
    }

    pub fn with_backstory(mut self, backstory: impl Into<String>) -> Self {
        self.backstory = backstory.into();
        self
    }

    pub fn with_reasoning(mut self, reasoning: Reasoning) -> Self {
        self.reasoning = reasoning;
        self
    }

    pub fn with_context(mut self, context: ContextSpec) -> Self {
        self.context = context;
        self
    }

    pub fn with_examples(mut self, examples: Vec<FewShotExample>) -> Self {
        self.examples = examples;
        self
    }

    /// Returns every violated invariant.
    pub fn check(&self) -> Vec<AgentError> {
        let mut errors = Vec::new();
        let name = || self.name.clone();
        if !is_identifier(&self.name) {
            errors.push(AgentError::BadName(name()));
        }
        match &self.kind {
            AgentKind::Scoring(s) => {
                if s.scoring_set.is_empty() {
                    errors.push(AgentError::EmptyScoringSet(name()));
                } else if s.normalized_set().len() != s.scoring_set.len() {
                    errors.push(AgentError::DuplicateScore(name()));
                }
                if s.scoring_task.trim().is_empty() {
                    errors.push(AgentError::MissingField(name(), "scoring_task"));
                }
            }
            AgentKind::TitleAbstract(t) => {
                if t.inclusion_criteria.trim().is_empty() {
                    errors.push(AgentError::MissingField(name(), "inclusion_criteria"));
                }
            }
            AgentKind::Abstraction(a) => {
                if a.keys.is_empty() {
                    errors.push(AgentError::MissingField(name(), "abstraction_keys"));
                }
                for (i, k) in a.keys.iter().enumerate() {
                    if a.keys[..i].iter().any(|o| o.name == k.name) {
                        errors.push(AgentError::Schema(name(), SchemaError::DuplicateField(k.name.clone())));
                    }
                    if k.description.trim().is_empty() {
                        errors.push(AgentError::MissingKeyDescription(name(), k.name.clone()));
                    }
                    if !matches!(k.kind, FieldKind::Text | FieldKind::Integer | FieldKind::ListOfText) {
                        errors.push(AgentError::UnsupportedKeyKind(name(), k.name.clone()));
                    }
                }
            }
            AgentKind::Custom(c) => match placeholders(&c.prompt_template) {
                Ok(vars) => {
                    for v in vars {
                        if !CUSTOM_BUILTIN_VARS.contains(&v.as_str()) && !c.variables.contains_key(&v) {
                            errors.push(AgentError::UnresolvedPlaceholder(name(), v));
                        }
                    }
                }
                Err(e) => errors.push(AgentError::Template(name(), e.to_string())),
            },
        }
        errors
    }

    /// The structured output this agent must return for every item.
    pub fn output_schema(&self) -> OutputSchema {
        output_schema_for(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("agent name `{0}` is not a valid identifier")]
    BadName(String),
    #[error("agent `{0}`: scoring_set is empty")]
    EmptyScoringSet(String),
    #[error("agent `{0}`: scoring_set has duplicate values")]
    DuplicateScore(String),
    #[error("agent `{0}`: `{1}` is required")]
    MissingField(String, &'static str),
    #[error("agent `{0}`: abstraction key `{1}` has no description")]
    MissingKeyDescription(String, String),
    #[error("agent `{0}`: abstraction key `{1}` must be text, integer or list of text")]
    UnsupportedKeyKind(String, String),
    #[error("agent `{0}`: {1}")]
    Schema(String, SchemaError),
    #[error("agent `{0}`: template references undeclared variable `{1}`")]
    UnresolvedPlaceholder(String, String),
    #[error("agent `{0}`: {1}")]
    Template(String, String),
}

fn reasoning_schema(score_field: &str, score_kind: FieldKind) -> OutputSchema {
    let (lo, hi) = CERTAINTY_RANGE;
    let mut schema = OutputSchema::from_pairs([
        ("reasoning", FieldKind::Text),
        (score_field, score_kind),
        ("certainty", FieldKind::IntegerInRange { lo, hi }),
    ])
    .expect("static schema is well-formed");
    schema.set_nonempty("reasoning");
    schema
}

/// Output schema by agent kind:
///
/// * scoring: `reasoning`, `score` (in the scoring set), `certainty` (0–100)
/// * title/abstract: `reasoning`, `evaluation` (1–5), `certainty` (0–100)
/// * abstraction: one field per key
/// * custom: the declared response schema
pub fn output_schema_for(agent: &AgentSpec) -> OutputSchema {
    match &agent.kind {
        AgentKind::Scoring(s) => reasoning_schema(
            "score",
            FieldKind::IntegerInSet {
                values: s.normalized_set(),
            },
        ),
        AgentKind::TitleAbstract(_) => {
            let (lo, hi) = EVALUATION_RANGE;
            reasoning_schema("evaluation", FieldKind::IntegerInRange { lo, hi })
        }
        AgentKind::Abstraction(a) => OutputSchema::from_pairs(
            a.keys.iter().map(|k| (k.name.clone(), k.kind.clone())),
        )
        .unwrap_or_else(|_| {
            // check() reports the problem; keep a usable placeholder schema
            OutputSchema::from_pairs(vec![("output", FieldKind::Text)]).expect("static")
        }),
        AgentKind::Custom(c) => c.response_schema.clone(),
    }
}
