//! Prompt templates and rendering.
//!
//! Templates use `${name}` placeholders. A `$` directly after the closing
//! brace (and not opening another placeholder) is part of the placeholder,
//! so `<<${item}$>>` renders as `<<...>>`. Substituted values are never
//! rescanned.
//!
//! The built-in templates live in `templates/` and are versioned with the
//! crate; [`TEMPLATE_VERSION`] changes whenever their text does.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::agent::{AgentKind, AgentSpec, FewShotExample, Reasoning};
use crate::schema::OutputSchema;

pub const TEMPLATE_VERSION: &str = "1";

const SCORING: &str = include_str!("../templates/scoring.txt");
const TITLE_ABSTRACT: &str = include_str!("../templates/title_abstract.txt");
const ABSTRACTION: &str = include_str!("../templates/abstraction.txt");
const OUTPUT_INSTRUCTION: &str = include_str!("../templates/output_instruction.txt");
const REASONING_BRIEF: &str = include_str!("../templates/reasoning_brief.txt");
const REASONING_COT: &str = include_str!("../templates/reasoning_cot.txt");
const RETRY_FEEDBACK: &str = include_str!("../templates/retry_feedback.txt");

/// Variables every custom template may use without declaring them.
pub const CUSTOM_BUILTIN_VARS: &[&str] = &[
    "item",
    "additional_context",
    "examples",
    "name",
    "backstory",
    "input_description",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("unresolved placeholder `${{{0}}}`")]
    UnresolvedPlaceholder(String),
    #[error("unterminated placeholder at byte {0}")]
    Unterminated(usize),
}

/// The input columns of one item, in round order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Item {
    pub fields: Vec<(String, String)>,
}

impl Item {
    pub fn new<I, K, V>(fields: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self {
            fields: fields.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    /// An item that is a single piece of text with no column name.
    pub fn text(value: impl Into<String>) -> Self {
        Self {
            fields: alloc::vec![(String::new(), value.into())],
        }
    }

    /// `column: value` lines in input order. Unnamed fields render as the
    /// bare value.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, (k, v)) in self.fields.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            if !k.is_empty() {
                out.push_str(k);
                out.push_str(": ");
            }
            out.push_str(v);
        }
        out
    }
}

enum Piece<'a> {
    Text(&'a str),
    Var(&'a str),
}

fn scan(template: &str) -> Result<Vec<Piece<'_>>, PromptError> {
    let mut out = Vec::new();
    let mut rest = template;
    let mut offset = 0;
    while let Some(start) = rest.find("${") {
        out.push(Piece::Text(&rest[..start]));
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or(PromptError::Unterminated(offset + start))?;
        out.push(Piece::Var(after[..end].trim()));
        let mut consumed = start + 2 + end + 1;
        if rest[consumed..].starts_with('$') && !rest[consumed..].starts_with("${") {
            consumed += 1;
        }
        offset += consumed;
        rest = &rest[consumed..];
    }
    out.push(Piece::Text(rest));
    Ok(out)
}

/// Distinct placeholder names in order of first appearance.
pub fn placeholders(template: &str) -> Result<Vec<String>, PromptError> {
    let mut names: Vec<String> = Vec::new();
    for p in scan(template)? {
        if let Piece::Var(v) = p {
            if !names.iter().any(|n| n == v) {
                names.push(v.to_string());
            }
        }
    }
    Ok(names)
}

/// Substitutes every placeholder from `vars`.
pub fn render_template(template: &str, vars: &BTreeMap<&str, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    for p in scan(template)? {
        match p {
            Piece::Text(t) => out.push_str(t),
            Piece::Var(v) => out.push_str(
                vars.get(v)
                    .ok_or_else(|| PromptError::UnresolvedPlaceholder(v.to_string()))?,
            ),
        }
    }
    Ok(out)
}

fn persona(agent: &AgentSpec) -> String {
    let backstory = agent.backstory.trim().trim_end_matches('.');
    if backstory.is_empty() {
        format!("Your name is {}.", agent.name)
    } else {
        format!("Your name is {}. You are {}.", agent.name, backstory)
    }
}

fn context_block(context: &str) -> String {
    let c = context.trim();
    if c.is_empty() {
        String::new()
    } else {
        format!("\n**Additional context:**\n{c}\n")
    }
}

/// Few-shot examples as alternating `Input:` / `Expected output:` blocks.
pub fn render_examples(examples: &[FewShotExample]) -> String {
    let mut out = String::new();
    for (i, ex) in examples.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("Input:\n{}\nExpected output:\n{}\n", ex.input.trim(), ex.output.trim()));
    }
    out
}

fn examples_block(examples: &[FewShotExample]) -> String {
    if examples.is_empty() {
        String::new()
    } else {
        format!("\n**Examples:**\n{}", render_examples(examples))
    }
}

pub fn reasoning_directive(reasoning: Reasoning) -> &'static str {
    match reasoning {
        Reasoning::Brief => REASONING_BRIEF.trim_end(),
        Reasoning::Cot => REASONING_COT.trim_end(),
    }
}

/// Closing instruction asking for a bare JSON object with the schema fields.
pub fn output_instruction(schema: &OutputSchema) -> String {
    let mut vars = BTreeMap::new();
    vars.insert("fields", schema.describe().trim_end().to_string());
    render_template(OUTPUT_INSTRUCTION.trim_end(), &vars).expect("static template")
}

/// Prompt for a retry after `error` rejected the previous response.
pub fn retry_prompt(base: &str, error: &str) -> String {
    let mut vars = BTreeMap::new();
    vars.insert("error", error.to_string());
    let tail = render_template(RETRY_FEEDBACK.trim_end(), &vars).expect("static template");
    format!("{base}{tail}")
}

/// Renders the full prompt for one item.
///
/// `context` is the resolved additional context; when empty the context
/// section is left out entirely.
pub fn build_prompt(agent: &AgentSpec, item: &Item, context: &str) -> Result<String, PromptError> {
    let schema = agent.output_schema();
    let mut vars: BTreeMap<&str, String> = BTreeMap::new();
    vars.insert("item", item.render());
    vars.insert("name", agent.name.clone());
    vars.insert("backstory", agent.backstory.clone());
    vars.insert("persona", persona(agent));
    vars.insert("context_block", context_block(context));
    vars.insert("examples_block", examples_block(&agent.examples));
    vars.insert("reasoning_directive", reasoning_directive(agent.reasoning).into());
    vars.insert("output_instruction", output_instruction(&schema));
    let body = match &agent.kind {
        AgentKind::Scoring(s) => {
            let set: Vec<String> = s.normalized_set().iter().map(|v| v.to_string()).collect();
            vars.insert("scoring_task", s.scoring_task.trim().to_string());
            vars.insert("scoring_set", format!("[{}]", set.join(", ")));
            vars.insert("scoring_rules", s.scoring_rules.trim().to_string());
            render_template(SCORING.trim_end(), &vars)?
        }
        AgentKind::TitleAbstract(t) => {
            vars.insert("inclusion_criteria", t.inclusion_criteria.trim().to_string());
            let exclusion = t.exclusion_criteria.trim();
            vars.insert(
                "exclusion_criteria",
                if exclusion.is_empty() { "Not specified".into() } else { exclusion.to_string() },
            );
            render_template(TITLE_ABSTRACT.trim_end(), &vars)?
        }
        AgentKind::Abstraction(a) => {
            let keys: Vec<String> = a
                .keys
                .iter()
                .map(|k| format!("- \"{}\" ({}): {}", k.name, k.kind, k.description.trim()))
                .collect();
            vars.insert("key_descriptions", keys.join("\n"));
            render_template(ABSTRACTION.trim_end(), &vars)?
        }
        AgentKind::Custom(c) => {
            let mut custom: BTreeMap<&str, String> = c
                .variables
                .iter()
                .map(|(k, v)| (k.as_str(), v.clone()))
                .collect();
            custom.insert("item", vars["item"].clone());
            custom.insert("additional_context", context.trim().to_string());
            custom.insert("examples", render_examples(&agent.examples));
            custom.insert("name", agent.name.clone());
            custom.insert("backstory", agent.backstory.clone());
            custom.insert("input_description", c.input_description.clone());
            let body = render_template(&c.prompt_template, &custom)?;
            format!("{}\n\n{}", body.trim_end(), vars["output_instruction"])
        }
    };
    Ok(body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{
        AbstractionKey, AbstractionSpec, ContextSpec, CustomSpec, ScoringSpec, TitleAbstractSpec,
    };
    use crate::schema::FieldKind;
    use alloc::vec;

    fn custom(template: &str) -> AgentSpec {
        AgentSpec::new(
            "ContextReviewer",
            "p",
            AgentKind::Custom(CustomSpec {
                prompt_template: template.into(),
                response_schema: OutputSchema::from_pairs([
                    ("summary", FieldKind::Text),
                    ("relevance_score", FieldKind::IntegerInRange { lo: 1, hi: 5 }),
                ])
                .unwrap(),
                input_description: "academic text with external context".into(),
                variables: BTreeMap::new(),
            }),
        )
    }

    fn figure_two_junior() -> AgentSpec {
        AgentSpec::new(
            "Alice",
            "p",
            AgentKind::TitleAbstract(TitleAbstractSpec {
                inclusion_criteria: "The study must focus on applications of artificial intelligence in radiology.".into(),
                exclusion_criteria: "Exclude studies that are not peer-reviewed or not written in English.".into(),
            }),
        )
        .with_backstory("a radiologist with expertise in systematic reviews")
    }

    #[test]
    fn substitution() {
        let p = build_prompt(&custom("Review: ${item}"), &Item::new([("title", "X")]), "").unwrap();
        assert!(p.starts_with("Review: title: X"), "{p}");
        assert!(p.contains("\"relevance_score\": integer from 1 to 5"));
    }

    #[test]
    fn trailing_dollar_placeholders() {
        let t = "**Context:**\n<<${additional_context}$>>\n**Input Text:**\n<<${item}$>>";
        let p = build_prompt(&custom(t), &Item::new([("raw_text", "AI in CT")]), "facts").unwrap();
        assert!(p.contains("<<facts>>"));
        assert!(p.contains("<<raw_text: AI in CT>>"));
    }

    #[test]
    fn adjacent_placeholders() {
        let mut vars = BTreeMap::new();
        vars.insert("a", "1".to_string());
        vars.insert("b", "2".to_string());
        assert_eq!(render_template("${a}${b}$.", &vars).unwrap(), "12.");
        assert_eq!(render_template("${a}$$", &vars).unwrap(), "1$");
    }

    #[test]
    fn unresolved_placeholder() {
        let err = build_prompt(&custom("Review ${undeclared}"), &Item::text("x"), "").unwrap_err();
        assert_eq!(err, PromptError::UnresolvedPlaceholder("undeclared".into()));
        assert_eq!(
            render_template("a ${b", &BTreeMap::new()).unwrap_err(),
            PromptError::Unterminated(2)
        );
    }

    #[test]
    fn declared_variables_resolve() {
        let mut a = custom("Audience: ${audience}. ${item}");
        if let AgentKind::Custom(c) = &mut a.kind {
            c.variables.insert("audience".into(), "radiologists".into());
        }
        assert!(a.check().is_empty());
        let p = build_prompt(&a, &Item::text("t"), "").unwrap();
        assert!(p.starts_with("Audience: radiologists. t"));
    }

    #[test]
    fn values_are_not_rescanned() {
        let p = build_prompt(&custom("${item}"), &Item::text("${additional_context}"), "secret").unwrap();
        assert!(p.starts_with("${additional_context}"));
        assert!(!p.contains("secret"));
    }

    #[test]
    fn criteria_blocks_verbatim() {
        let p = build_prompt(
            &figure_two_junior(),
            &Item::new([("title", "Deep learning for chest CT"), ("abstract", "We train a CNN.")]),
            "",
        )
        .unwrap();
        assert!(p.contains("The study must focus on applications of artificial intelligence in radiology."));
        assert!(p.contains("Exclude studies that are not peer-reviewed or not written in English."));
        assert!(p.contains("title: Deep learning for chest CT\nabstract: We train a CNN."));
        assert!(p.contains("You are a radiologist with expertise in systematic reviews."));
        assert!(p.contains("reason in 1-2 sentences"));
        assert!(p.contains("1: Absolutely exclude."));
        assert!(p.contains("\"evaluation\": integer from 1 to 5"));
        assert!(!p.contains("Additional context"));
        assert!(!p.contains("${"));
        assert!(p.trim_end().ends_with("\"certainty\": integer from 0 to 100"));
    }

    #[test]
    fn cot_directive_and_examples() {
        let a = figure_two_junior()
            .with_reasoning(Reasoning::Cot)
            .with_examples(vec![FewShotExample {
                input: "title: CNN for MRI".into(),
                output: "{\"reasoning\":\"fits\",\"evaluation\":5,\"certainty\":90}".into(),
            }]);
        let p = build_prompt(&a, &Item::text("x"), "").unwrap();
        assert!(p.contains("step by step"));
        assert!(p.contains("**Examples:**\nInput:\ntitle: CNN for MRI\nExpected output:\n{"));
        let ex = p.find("**Examples:**").unwrap();
        let item = p.find("**Input item:**").unwrap();
        assert!(ex < item);
    }

    #[test]
    fn context_adds_section_without_removing_others() {
        let a = figure_two_junior().with_context(ContextSpec::Static("ignored here".into()));
        let item = Item::new([("title", "t")]);
        let without = build_prompt(&a, &item, "").unwrap();
        let with = build_prompt(&a, &item, "Alice and Bob disagree.").unwrap();
        assert!(with.contains("**Additional context:**\nAlice and Bob disagree."));
        assert_eq!(with.replace("\n**Additional context:**\nAlice and Bob disagree.\n", ""), without);
    }

    #[test]
    fn scoring_and_abstraction_templates() {
        let s = AgentSpec::new(
            "Reviewer1",
            "p",
            AgentKind::Scoring(ScoringSpec {
                scoring_task: "Evaluate relevance of the article to AI in radiology".into(),
                scoring_set: vec![1, 2, 3, 4, 5],
                scoring_rules: "Rate relevance on a scale of 1 (not relevant) to 5 (highly relevant).".into(),
            }),
        );
        let p = build_prompt(&s, &Item::text("Advances in AI"), "").unwrap();
        assert!(p.contains("**Allowed scores:** [1, 2, 3, 4, 5]"));
        assert!(p.contains("Evaluate relevance of the article to AI in radiology"));
        assert!(p.contains("<<Advances in AI>>"));

        let a = AgentSpec::new(
            "AbstractionReviewer",
            "p",
            AgentKind::Abstraction(AbstractionSpec {
                keys: vec![AbstractionKey {
                    name: "title".into(),
                    kind: FieldKind::Text,
                    description: "Extract the article title.".into(),
                }],
            }),
        );
        let p = build_prompt(&a, &Item::text("raw"), "").unwrap();
        assert!(p.contains("- \"title\" (string): Extract the article title."));
        assert!(!p.contains("**Reasoning:**"));
    }

    #[test]
    fn retry_feedback() {
        let p = retry_prompt("base", "missing field `score`");
        assert!(p.starts_with("base\n\n**Your previous response was rejected:** missing field `score`"));
    }
}
