//! Workflow schemas: rounds of reviewers, their inputs and filters.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;
use thiserror::Error;

use crate::agent::AgentSpec;
use crate::filter::{FilterEvalError, FilterExpr};
use crate::provider::ProviderConfig;
use crate::table::{make_column_name, ReviewTable};

pub const DEFAULT_MAX_CONCURRENCY: usize = 10;
/// Name of the per-agent column holding the whole output object as JSON.
pub const OUTPUT_FIELD: &str = "output";

#[derive(Debug, Clone, PartialEq)]
pub struct RoundSpec {
    pub round_id: String,
    pub reviewers: Vec<String>,
    pub text_inputs: Vec<String>,
    pub image_inputs: Vec<String>,
    pub filter: Option<FilterExpr>,
}

impl RoundSpec {
    pub fn new<R, T>(round_id: impl Into<String>, reviewers: R, text_inputs: T) -> Self
    where
        R: IntoIterator,
        R::Item: Into<String>,
        T: IntoIterator,
        T::Item: Into<String>,
    {
        Self {
            round_id: round_id.into(),
            reviewers: reviewers.into_iter().map(Into::into).collect(),
            text_inputs: text_inputs.into_iter().map(Into::into).collect(),
            image_inputs: Vec::new(),
            filter: None,
        }
    }

    pub fn with_filter(mut self, filter: FilterExpr) -> Self {
        self.filter = Some(filter);
        self
    }

    pub fn with_image_inputs<I>(mut self, columns: I) -> Self
    where
        I: IntoIterator,
        I::Item: Into<String>,
    {
        self.image_inputs = columns.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowSchema {
    pub rounds: Vec<RoundSpec>,
    pub max_concurrency: usize,
}

impl WorkflowSchema {
    pub fn new(rounds: Vec<RoundSpec>) -> Self {
        Self {
            rounds,
            max_concurrency: DEFAULT_MAX_CONCURRENCY,
        }
    }

    pub fn with_max_concurrency(mut self, n: usize) -> Self {
        self.max_concurrency = n;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum SchemaIssue {
    #[error("workflow has no rounds")]
    NoRounds,
    #[error("max_concurrency must be at least 1")]
    ZeroConcurrency,
    #[error("round id `{0}` must be nonempty ASCII alphanumerics")]
    BadRoundId(String),
    #[error("duplicate round `{0}`")]
    DuplicateRound(String),
    #[error("round `{0}` has no reviewers")]
    NoReviewers(String),
    #[error("round `{0}` has no text inputs")]
    NoTextInputs(String),
    #[error("round `{round}` lists reviewer `{agent}` twice")]
    DuplicateReviewer { round: String, agent: String },
    #[error("round `{round}`: unknown agent `{agent}`")]
    UnknownAgent { round: String, agent: String },
    #[error("agent `{agent}`: unknown provider `{provider}`")]
    UnknownProvider { agent: String, provider: String },
    #[error("round `{round}`: column `{column}` is not available at this round")]
    UnknownColumn { round: String, column: String },
    #[error("round `{round}`: output column `{column}` already exists")]
    ColumnCollision { round: String, column: String },
}

/// Columns an agent appends in a round: one per output field, then
/// [`OUTPUT_FIELD`].
pub fn agent_columns(round_id: &str, agent: &AgentSpec) -> Vec<String> {
    let schema = agent.output_schema();
    schema
        .field_names()
        .chain(core::iter::once(OUTPUT_FIELD))
        .map(|f| make_column_name(round_id, &agent.name, f))
        .collect()
}

/// Checks a schema against the base table's columns and the available
/// agents and providers. All problems are reported, not just the first.
///
/// A round may read base columns and columns produced by *earlier* rounds;
/// its own outputs land only after it finishes.
pub fn validate_schema(
    schema: &WorkflowSchema,
    base_columns: &[String],
    agents: &[AgentSpec],
    providers: &[ProviderConfig],
) -> Result<(), Vec<SchemaIssue>> {
    let mut issues = Vec::new();
    if schema.rounds.is_empty() {
        issues.push(SchemaIssue::NoRounds);
    }
    if schema.max_concurrency == 0 {
        issues.push(SchemaIssue::ZeroConcurrency);
    }
    let mut available: BTreeSet<String> = base_columns.iter().cloned().collect();
    let mut round_ids = BTreeSet::new();
    let mut checked_providers = BTreeSet::new();

    for round in &schema.rounds {
        let rid = &round.round_id;
        if rid.is_empty() || !rid.bytes().all(|b| b.is_ascii_alphanumeric()) {
            issues.push(SchemaIssue::BadRoundId(rid.clone()));
        }
        if !round_ids.insert(rid.as_str()) {
            issues.push(SchemaIssue::DuplicateRound(rid.clone()));
        }
        if round.reviewers.is_empty() {
            issues.push(SchemaIssue::NoReviewers(rid.clone()));
        }
        if round.text_inputs.is_empty() {
            issues.push(SchemaIssue::NoTextInputs(rid.clone()));
        }

        let mut referenced: Vec<&str> = round
            .text_inputs
            .iter()
            .chain(&round.image_inputs)
            .map(String::as_str)
            .collect();
        if let Some(f) = &round.filter {
            referenced.extend(f.columns());
        }
        let mut reported = BTreeSet::new();
        for column in referenced {
            if !available.contains(column) && reported.insert(column) {
                issues.push(SchemaIssue::UnknownColumn {
                    round: rid.clone(),
                    column: column.into(),
                });
            }
        }

        let mut seen_reviewers = BTreeSet::new();
        let mut produced = Vec::new();
        for name in &round.reviewers {
            if !seen_reviewers.insert(name.as_str()) {
                issues.push(SchemaIssue::DuplicateReviewer {
                    round: rid.clone(),
                    agent: name.clone(),
                });
                continue;
            }
            let Some(agent) = agents.iter().find(|a| &a.name == name) else {
                issues.push(SchemaIssue::UnknownAgent {
                    round: rid.clone(),
                    agent: name.clone(),
                });
                continue;
            };
            if checked_providers.insert(agent.name.as_str())
                && !providers.iter().any(|p| p.name == agent.provider)
            {
                issues.push(SchemaIssue::UnknownProvider {
                    agent: agent.name.clone(),
                    provider: agent.provider.clone(),
                });
            }
            produced.extend(agent_columns(rid, agent));
        }
        for column in produced {
            if !available.insert(column.clone()) {
                issues.push(SchemaIssue::ColumnCollision {
                    round: rid.clone(),
                    column,
                });
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

/// Which rows a round will review.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundScope {
    /// Rows that pass the filter and have every input present, ascending.
    pub rows: Vec<usize>,
    /// Rows that passed the filter.
    pub passed_filter: usize,
    /// Rows that passed the filter but have a null input cell.
    pub null_inputs: Vec<usize>,
    /// Rows whose filter could not be evaluated.
    pub filter_errors: Vec<(usize, FilterEvalError)>,
}

/// Evaluates a round's filter over a frozen table snapshot.
///
/// Filter errors skip the row and are reported rather than aborting.
pub fn rows_in_scope(round: &RoundSpec, table: &ReviewTable) -> RoundScope {
    let mut scope = RoundScope::default();
    for (i, row) in table.iter_rows().enumerate() {
        let pass = match &round.filter {
            None => true,
            Some(f) => match f.eval(&row) {
                Ok(b) => b,
                Err(e) => {
                    scope.filter_errors.push((i, e));
                    false
                }
            },
        };
        if !pass {
            continue;
        }
        scope.passed_filter += 1;
        let inputs_present = round
            .text_inputs
            .iter()
            .chain(&round.image_inputs)
            .all(|c| matches!(row.get(c), Some(Some(_))));
        if inputs_present {
            scope.rows.push(i);
        } else {
            scope.null_inputs.push(i);
        }
    }
    scope
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{AgentKind, TitleAbstractSpec};
    use crate::filter::parse_filter;
    use alloc::string::ToString;
    use alloc::vec;

    fn ta(name: &str, provider: &str) -> AgentSpec {
        AgentSpec::new(
            name,
            provider,
            AgentKind::TitleAbstract(TitleAbstractSpec {
                inclusion_criteria: "AI in radiology".into(),
                exclusion_criteria: "Not peer-reviewed".into(),
            }),
        )
    }

    fn figure_two() -> (WorkflowSchema, Vec<AgentSpec>, Vec<ProviderConfig>) {
        let schema = WorkflowSchema::new(vec![
            RoundSpec::new("A", ["Alice", "Bob"], ["title", "abstract"]),
            RoundSpec::new(
                "B",
                ["Carol"],
                ["title", "abstract", "round-A_Alice_output", "round-A_Bob_output"],
            )
            .with_filter(parse_filter("round-A_Alice_evaluation != round-A_Bob_evaluation").unwrap()),
        ]);
        let agents = vec![ta("Alice", "mini"), ta("Bob", "flash"), ta("Carol", "big")];
        let providers = ["mini", "flash", "big"]
            .iter()
            .map(|n| ProviderConfig::mock(*n, "s.json"))
            .collect();
        (schema, agents, providers)
    }

    fn base() -> Vec<String> {
        vec!["title".to_string(), "abstract".to_string()]
    }

    #[test]
    fn figure_two_is_valid() {
        let (s, a, p) = figure_two();
        assert_eq!(validate_schema(&s, &base(), &a, &p), Ok(()));
    }

    #[test]
    fn self_reference_is_unknown_column() {
        let (mut s, a, p) = figure_two();
        s.rounds[0].text_inputs.push("round-A_Alice_output".into());
        assert_eq!(
            validate_schema(&s, &base(), &a, &p).unwrap_err(),
            vec![SchemaIssue::UnknownColumn { round: "A".into(), column: "round-A_Alice_output".into() }]
        );
    }

    #[test]
    fn filter_on_later_round_is_unknown_column() {
        let (mut s, a, p) = figure_two();
        s.rounds[0].filter = Some(parse_filter("round-B_Carol_evaluation > 3").unwrap());
        assert_eq!(
            validate_schema(&s, &base(), &a, &p).unwrap_err(),
            vec![SchemaIssue::UnknownColumn { round: "A".into(), column: "round-B_Carol_evaluation".into() }]
        );
    }

    #[test]
    fn collects_all_errors() {
        let (mut s, mut a, p) = figure_two();
        s.rounds[1].round_id = "A".into();
        s.rounds[0].reviewers.push("Dave".into());
        a[1].provider = "nope".into();
        let issues = validate_schema(&s, &base(), &a, &p).unwrap_err();
        assert!(issues.contains(&SchemaIssue::DuplicateRound("A".into())));
        assert!(issues.contains(&SchemaIssue::UnknownAgent { round: "A".into(), agent: "Dave".into() }));
        assert!(issues.contains(&SchemaIssue::UnknownProvider { agent: "Bob".into(), provider: "nope".into() }));
        // the second "A" round would write Carol's columns under round A; no collision,
        // but its inputs are still only available from the first round
        assert!(issues.iter().all(|i| !matches!(i, SchemaIssue::ColumnCollision { .. })));
    }

    #[test]
    fn same_agent_in_two_rounds() {
        let (mut s, a, p) = figure_two();
        s.rounds[1].reviewers = vec!["Alice".into()];
        assert_eq!(validate_schema(&s, &base(), &a, &p), Ok(()));
    }

    #[test]
    fn monotone_under_added_columns() {
        let (s, a, p) = figure_two();
        let mut cols = base();
        cols.push("year".into());
        assert_eq!(validate_schema(&s, &cols, &a, &p), Ok(()));
    }

    #[test]
    fn structural_issues() {
        let s = WorkflowSchema::new(vec![RoundSpec::new("A-1", ["X", "X"], Vec::<String>::new())])
            .with_max_concurrency(0);
        let issues = validate_schema(&s, &base(), &[ta("X", "p")], &[]).unwrap_err();
        assert!(issues.contains(&SchemaIssue::ZeroConcurrency));
        assert!(issues.contains(&SchemaIssue::BadRoundId("A-1".into())));
        assert!(issues.contains(&SchemaIssue::NoTextInputs("A-1".into())));
        assert!(issues.contains(&SchemaIssue::DuplicateReviewer { round: "A-1".into(), agent: "X".into() }));
        assert!(issues.contains(&SchemaIssue::UnknownProvider { agent: "X".into(), provider: "p".into() }));
        assert_eq!(
            validate_schema(&WorkflowSchema::new(vec![]), &base(), &[], &[]).unwrap_err(),
            vec![SchemaIssue::NoRounds]
        );
    }

    #[test]
    fn base_column_collision() {
        let (s, a, p) = figure_two();
        let mut cols = base();
        cols.push("round-A_Alice_reasoning".into());
        assert_eq!(
            validate_schema(&s, &cols, &a, &p).unwrap_err(),
            vec![SchemaIssue::ColumnCollision { round: "A".into(), column: "round-A_Alice_reasoning".into() }]
        );
    }

    fn t(rows: &[(&str, Option<&str>)]) -> ReviewTable {
        ReviewTable::from_rows(
            ["a", "b"],
            rows.iter()
                .map(|(a, b)| vec![Some(a.to_string()), b.map(str::to_string)])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn scope_without_filter() {
        let table = t(&[("1", Some("1")); 5]);
        let round = RoundSpec::new("A", ["x"], ["a"]);
        assert_eq!(rows_in_scope(&round, &table).rows, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn scope_with_filter_and_nulls() {
        let table = t(&[("3", Some("4")), ("3", Some("3")), ("3", None)]);
        let round = RoundSpec::new("A", ["x"], ["a"]).with_filter(parse_filter("a != b").unwrap());
        let scope = rows_in_scope(&round, &table);
        assert_eq!(scope.rows, vec![0]);
        assert_eq!(scope.passed_filter, 1);

        let reads_b = RoundSpec::new("A", ["x"], ["a", "b"]);
        let scope = rows_in_scope(&reads_b, &table);
        assert_eq!(scope.rows, vec![0, 1]);
        assert_eq!(scope.null_inputs, vec![2]);
    }

    #[test]
    fn scope_filter_errors() {
        let table = t(&[("x", Some("1")), ("2", Some("1"))]);
        let round = RoundSpec::new("A", ["x"], ["a"]).with_filter(parse_filter("a > b").unwrap());
        let scope = rows_in_scope(&round, &table);
        assert_eq!(scope.rows, vec![1]);
        assert_eq!(scope.filter_errors.len(), 1);
        assert_eq!(scope.filter_errors[0].0, 0);
    }
}
