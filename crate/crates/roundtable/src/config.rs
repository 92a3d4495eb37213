//! Declarative workflow configuration in TOML.
//!
//! ```toml
//! [settings]
//! max_concurrency = 10
//! env_file = ".env"
//!
//! [[provider]]
//! name = "mini"
//! kind = "openai_compatible"
//! model = "gpt-4o-mini"
//! price = { input = "0.15e-6", output = "0.60e-6" }
//!
//! [[agent]]
//! name = "Alice"
//! provider = "mini"
//! kind = "title_abstract"
//! inclusion_criteria = "..."
//!
//! [[round]]
//! id = "A"
//! reviewers = ["Alice"]
//! text_inputs = ["title", "abstract"]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use roundtable_core::consensus::DEFAULT_NEUTRAL_SCORE;
use roundtable_core::provider::DEFAULT_MAX_RETRIES;
use roundtable_core::{
    parse_filter, AbstractionKey, AbstractionSpec, AgentKind, AgentSpec, ConsensusConfig,
    ContextSpec, CustomSpec, Decimal, FewShotExample, FieldKind, FieldSpec, FilterParseError,
    OutputSchema, Price, ProviderConfig, ProviderKind, Reasoning, RoundSpec, ScoringSpec,
    TitleAbstractSpec, WorkflowSchema,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::{CommandLookup, LookupRegistry, Reviewer};
use crate::engine::{registry, ReviewerRegistry};
use crate::provider::{MockBackend, MockScript, Provider, ProviderError};

mod decimal_text {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        Text(String),
        Int(i64),
        Float(f64),
    }

    pub fn parse(text: &str) -> Option<Decimal> {
        let t = text.trim();
        Decimal::from_str(t).ok().or_else(|| Decimal::from_scientific(t).ok())
    }

    pub fn serialize<S: Serializer>(d: &Decimal, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&d.normalize().to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Decimal, D::Error> {
        let text = match Num::deserialize(d)? {
            Num::Text(s) => s,
            Num::Int(i) => i.to_string(),
            Num::Float(f) => f.to_string(),
        };
        parse(&text).ok_or_else(|| serde::de::Error::custom(format!("`{text}` is not a decimal number")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_concurrency: Option<usize>,
    /// Seed for mock delay jitter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPrice {
    #[serde(with = "decimal_text")]
    pub input: Decimal,
    #[serde(with = "decimal_text")]
    pub output: Decimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProvider {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supports_images: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<RawPrice>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub model_args: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExample {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawKey {
    pub name: String,
    #[serde(flatten)]
    pub kind: FieldKind,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawField {
    pub name: String,
    #[serde(flatten)]
    pub kind: FieldKind,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub nonempty: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAgent {
    pub name: String,
    pub provider: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backstory: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub additional_context: Option<String>,
    /// Named lookup registered by the embedding program.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_lookup: Option<String>,
    /// Command run per item with the item text on stdin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_command: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_strict: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scoring_task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scoring_set: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scoring_rules: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inclusion_criteria: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion_criteria: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_description: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub variables: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub model_args: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub examples: Vec<RawExample>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub abstraction_keys: Vec<RawKey>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub response_schema: Vec<RawField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRound {
    pub id: String,
    pub reviewers: Vec<String>,
    pub text_inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub image_inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConsensus {
    pub junior: Vec<String>,
    pub senior: String,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neutral_score: Option<u8>,
}

/// The config file as written, before resolution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub settings: RawSettings,
    #[serde(default, rename = "provider", skip_serializing_if = "Vec::is_empty")]
    pub providers: Vec<RawProvider>,
    #[serde(default, rename = "agent", skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<RawAgent>,
    #[serde(default, rename = "round", skip_serializing_if = "Vec::is_empty")]
    pub rounds: Vec<RawRound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus: Option<RawConsensus>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Canonical TOML rendering; parsing it yields an equal `RawConfig`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("round `{round}`: filter syntax error: {source}")]
    Filter {
        round: String,
        source: FilterParseError,
    },
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("env file {path}: {message}")]
    EnvFile { path: String, message: String },
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Script(#[from] crate::provider::ScriptError),
    #[error(transparent)]
    Reviewer(#[from] crate::agents::ReviewerError),
}

/// A loaded, resolved and cross-checked workflow configuration.
#[derive(Debug, Clone)]
pub struct WorkflowConfig {
    pub raw: RawConfig,
    pub providers: Vec<ProviderConfig>,
    pub agents: Vec<AgentSpec>,
    pub schema: WorkflowSchema,
    pub consensus: Option<ConsensusConfig>,
    /// Directory relative paths in the config resolve against.
    pub base_dir: PathBuf,
    /// Variables from the env file; the process environment takes precedence.
    pub env_file_vars: BTreeMap<String, String>,
    /// Dynamic context commands by lookup name.
    pub commands: BTreeMap<String, CommandLookup>,
}

fn provider_kind(s: &str) -> Option<ProviderKind> {
    match s {
        "openai_compatible" => Some(ProviderKind::OpenaiCompatible),
        "mock" => Some(ProviderKind::Mock),
        _ => None,
    }
}

fn resolve_provider(p: &RawProvider, errors: &mut Vec<String>) -> Option<ProviderConfig> {
    let Some(kind) = provider_kind(&p.kind) else {
        errors.push(format!(
            "provider `{}`: unknown kind `{}` (expected openai_compatible or mock)",
            p.name, p.kind
        ));
        return None;
    };
    let mut c = match kind {
        ProviderKind::Mock => ProviderConfig::mock(p.name.clone(), p.script.clone().unwrap_or_default()),
        ProviderKind::OpenaiCompatible => {
            let mut c = ProviderConfig::openai_compatible(p.name.clone(), p.model.clone().unwrap_or_default());
            c.script = p.script.clone();
            c
        }
    };
    if let Some(m) = &p.model {
        c.model = m.clone();
    }
    if kind == ProviderKind::Mock && p.base_url.is_some() {
        errors.push(format!("provider `{}`: base_url applies to openai_compatible only", p.name));
    }
    c.base_url = p.base_url.clone();
    if let Some(v) = &p.api_key_env {
        c.api_key_env = Some(v.clone());
    }
    c.max_retries = p.max_retries.unwrap_or(DEFAULT_MAX_RETRIES);
    if let Some(t) = p.timeout_secs {
        c.timeout = Duration::from_secs(t);
    }
    if let Some(b) = p.supports_images {
        c.supports_images = b;
    }
    c.price = p.price.as_ref().map(|pr| Price::new(pr.input, pr.output));
    c.model_args = p.model_args.clone();
    errors.extend(c.check().into_iter().map(|e| e.to_string()));
    Some(c)
}

fn require(a: &RawAgent, field: &'static str, value: &Option<String>, errors: &mut Vec<String>) -> String {
    match value {
        Some(v) => v.clone(),
        None => {
            errors.push(format!("agent `{}`: `{field}` is required for kind {}", a.name, a.kind));
            String::new()
        }
    }
}

fn resolve_agent(
    a: &RawAgent,
    base_dir: &Path,
    commands: &mut BTreeMap<String, CommandLookup>,
    errors: &mut Vec<String>,
) -> Option<AgentSpec> {
    let used: &[(&str, bool)] = &[
        ("scoring_task", a.scoring_task.is_some()),
        ("scoring_set", a.scoring_set.is_some()),
        ("scoring_rules", a.scoring_rules.is_some()),
        ("inclusion_criteria", a.inclusion_criteria.is_some()),
        ("exclusion_criteria", a.exclusion_criteria.is_some()),
        ("abstraction_keys", !a.abstraction_keys.is_empty()),
        ("prompt_template", a.prompt_template.is_some()),
        ("response_schema", !a.response_schema.is_empty()),
        ("input_description", a.input_description.is_some()),
        ("variables", !a.variables.is_empty()),
        ("reasoning", a.reasoning.is_some()),
    ];
    let allowed: &[&str] = match a.kind.as_str() {
        "scoring" => &["scoring_task", "scoring_set", "scoring_rules", "reasoning"],
        "title_abstract" => &["inclusion_criteria", "exclusion_criteria", "reasoning"],
        "abstraction" => &["abstraction_keys"],
        "custom" => &["prompt_template", "response_schema", "input_description", "variables"],
        other => {
            errors.push(format!(
                "agent `{}`: unknown kind `{other}` (expected scoring, title_abstract, abstraction or custom)",
                a.name
            ));
            return None;
        }
    };
    for (field, present) in used {
        if *present && !allowed.contains(field) {
            errors.push(format!("agent `{}`: `{field}` does not apply to kind {}", a.name, a.kind));
        }
    }

    let kind = match a.kind.as_str() {
        "scoring" => AgentKind::Scoring(ScoringSpec {
            scoring_task: require(a, "scoring_task", &a.scoring_task, errors),
            scoring_set: a.scoring_set.clone().unwrap_or_else(|| vec![1, 2, 3, 4, 5]),
            scoring_rules: a.scoring_rules.clone().unwrap_or_default(),
        }),
        "title_abstract" => AgentKind::TitleAbstract(TitleAbstractSpec {
            inclusion_criteria: require(a, "inclusion_criteria", &a.inclusion_criteria, errors),
            exclusion_criteria: a.exclusion_criteria.clone().unwrap_or_default(),
        }),
        "abstraction" => AgentKind::Abstraction(AbstractionSpec {
            keys: a
                .abstraction_keys
                .iter()
                .map(|k| AbstractionKey {
                    name: k.name.clone(),
                    kind: k.kind.clone(),
                    description: k.description.clone(),
                })
                .collect(),
        }),
        _ => {
            let fields = a
                .response_schema
                .iter()
                .map(|f| FieldSpec {
                    name: f.name.clone(),
                    kind: f.kind.clone(),
                    nonempty: f.nonempty,
                })
                .collect();
            let response_schema = match OutputSchema::new(fields) {
                Ok(s) => s,
                Err(e) => {
                    errors.push(format!("agent `{}`: response_schema: {e}", a.name));
                    return None;
                }
            };
            AgentKind::Custom(CustomSpec {
                prompt_template: require(a, "prompt_template", &a.prompt_template, errors),
                response_schema,
                input_description: a.input_description.clone().unwrap_or_default(),
                variables: a.variables.clone(),
            })
        }
    };

    let reasoning = match a.reasoning.as_deref() {
        None | Some("brief") => Reasoning::Brief,
        Some("cot") => Reasoning::Cot,
        Some(other) => {
            errors.push(format!("agent `{}`: reasoning must be brief or cot, not `{other}`", a.name));
            Reasoning::Brief
        }
    };
    let strict = a.context_strict.unwrap_or(false);
    let sources = [
        a.additional_context.is_some(),
        a.context_lookup.is_some(),
        a.context_command.is_some(),
    ];
    if sources.iter().filter(|&&b| b).count() > 1 {
        errors.push(format!(
            "agent `{}`: set at most one of additional_context, context_lookup, context_command",
            a.name
        ));
    }
    let context = if let Some(text) = &a.additional_context {
        ContextSpec::Static(text.clone())
    } else if let Some(name) = &a.context_lookup {
        ContextSpec::Dynamic { lookup: name.clone(), strict }
    } else if let Some(argv) = &a.context_command {
        match argv.split_first() {
            Some((program, args)) => {
                let name = format!("command:{}", a.name);
                commands.insert(
                    name.clone(),
                    CommandLookup {
                        program: program.clone(),
                        args: args.to_vec(),
                        working_dir: Some(base_dir.to_path_buf()),
                    },
                );
                ContextSpec::Dynamic { lookup: name, strict }
            }
            None => {
                errors.push(format!("agent `{}`: context_command is empty", a.name));
                ContextSpec::None
            }
        }
    } else {
        ContextSpec::None
    };

    let mut spec = AgentSpec::new(a.name.clone(), a.provider.clone(), kind)
        .with_backstory(a.backstory.clone().unwrap_or_default())
        .with_reasoning(reasoning)
        .with_context(context)
        .with_examples(
            a.examples
                .iter()
                .map(|e| FewShotExample {
                    input: e.input.clone(),
                    output: e.output.clone(),
                })
                .collect(),
        );
    spec.model_args = a.model_args.clone();
    errors.extend(spec.check().into_iter().map(|e| e.to_string()));
    Some(spec)
}

impl WorkflowConfig {
    /// Resolves a parsed config. Relative paths are taken from `base_dir`.
    pub fn from_raw(raw: RawConfig, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut errors = Vec::new();
        let mut providers = Vec::new();
        for p in &raw.providers {
            if providers.iter().any(|q: &ProviderConfig| q.name == p.name) {
                errors.push(format!("duplicate provider `{}`", p.name));
            }
            providers.extend(resolve_provider(p, &mut errors));
        }
        let mut agents: Vec<AgentSpec> = Vec::new();
        let mut commands = BTreeMap::new();
        for a in &raw.agents {
            if agents.iter().any(|b| b.name == a.name) {
                errors.push(format!("duplicate agent `{}`", a.name));
            }
            if !raw.providers.iter().any(|p| p.name == a.provider) {
                errors.push(format!("agent `{}`: unknown provider `{}`", a.name, a.provider));
            }
            agents.extend(resolve_agent(a, base_dir, &mut commands, &mut errors));
        }
        if raw.rounds.is_empty() {
            errors.push("config has no [[round]] sections".into());
        }
        let mut rounds = Vec::new();
        for (i, r) in raw.rounds.iter().enumerate() {
            if raw.rounds[..i].iter().any(|q| q.id == r.id) {
                errors.push(format!("duplicate round `{}`", r.id));
            }
            for name in &r.reviewers {
                if !raw.agents.iter().any(|a| &a.name == name) {
                    errors.push(format!("round `{}`: unknown agent `{name}`", r.id));
                }
            }
            let mut round = RoundSpec::new(r.id.clone(), r.reviewers.clone(), r.text_inputs.clone())
                .with_image_inputs(r.image_inputs.clone());
            if let Some(src) = &r.filter {
                let f = parse_filter(src).map_err(|source| ConfigError::Filter {
                    round: r.id.clone(),
                    source,
                })?;
                round = round.with_filter(f);
            }
            rounds.push(round);
        }
        let mut schema = WorkflowSchema::new(rounds);
        if let Some(n) = raw.settings.max_concurrency {
            if n == 0 {
                errors.push("settings.max_concurrency must be at least 1".into());
            }
            schema = schema.with_max_concurrency(n);
        }
        let consensus = match &raw.consensus {
            None => None,
            Some(c) => {
                if c.junior.len() != 2 {
                    errors.push(format!("consensus.junior needs exactly 2 columns, got {}", c.junior.len()));
                    None
                } else {
                    let mut cc = ConsensusConfig::new(&c.junior[0], &c.junior[1], &c.senior, &c.output);
                    cc.neutral_score = c.neutral_score.unwrap_or(DEFAULT_NEUTRAL_SCORE);
                    Some(cc)
                }
            }
        };
        if !errors.is_empty() {
            return Err(ConfigError::Invalid(errors));
        }
        let env_file_vars = match &raw.settings.env_file {
            Some(f) => read_env_file(&base_dir.join(f))?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            raw,
            providers,
            agents,
            schema,
            consensus,
            base_dir: base_dir.to_path_buf(),
            env_file_vars,
            commands,
        })
    }

    /// Looks a variable up in the process environment, then the env file.
    pub fn env_var(&self, name: &str) -> Option<String> {
        std::env::var(name).ok().or_else(|| self.env_file_vars.get(name).cloned())
    }

    /// Whether any provider would make network calls.
    pub fn uses_network(&self) -> bool {
        self.providers.iter().any(crate::provider::is_remote)
    }

    /// Instantiates providers and reviewers. Mock scripts are read here and
    /// credentials for remote providers resolved; no request is sent.
    pub fn build_reviewers(&self, extra_lookups: &LookupRegistry) -> Result<ReviewerRegistry, BuildError> {
        let mut lookups = extra_lookups.clone();
        for (name, cmd) in &self.commands {
            lookups.insert(name.clone(), Arc::new(cmd.clone()));
        }
        let mut providers: BTreeMap<&str, Arc<Provider>> = BTreeMap::new();
        for p in &self.providers {
            let provider = match p.kind {
                ProviderKind::Mock => {
                    let path = self.base_dir.join(p.script.as_deref().unwrap_or_default());
                    let mut script = MockScript::load(&path)?;
                    if let Some(seed) = self.raw.settings.seed {
                        script.seed = seed;
                    }
                    Provider::mock(p.clone(), Arc::new(MockBackend::new(script)))
                }
                ProviderKind::OpenaiCompatible => Provider::http(p.clone(), |v| self.env_var(v))?,
            };
            providers.insert(&p.name, Arc::new(provider));
        }
        let mut reviewers = Vec::new();
        for a in &self.agents {
            let provider = providers[a.provider.as_str()].clone();
            reviewers.push(Reviewer::new(a.clone(), provider, &lookups)?);
        }
        Ok(registry(reviewers))
    }
}

/// Reads `KEY=VALUE` lines without touching the process environment.
pub fn read_env_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let shown = path.display().to_string();
    let iter = dotenvy::from_path_iter(path).map_err(|e| ConfigError::EnvFile {
        path: shown.clone(),
        message: e.to_string(),
    })?;
    iter.map(|item| {
        item.map_err(|e| ConfigError::EnvFile {
            path: shown.clone(),
            message: e.to_string(),
        })
    })
    .collect()
}

pub fn load_config(path: &Path) -> Result<WorkflowConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let raw = RawConfig::parse(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    WorkflowConfig::from_raw(raw, &base)
}
