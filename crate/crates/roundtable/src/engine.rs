//! Executes a workflow schema over a table: rounds in order, every
//! (agent, row) pair of a round sharing one concurrency budget.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use roundtable_core::workflow::agent_columns;
use roundtable_core::{
    rows_in_scope, validate_schema, AgentSpec, Cell, CostLedger, Decimal, Item,
    LedgerEntry, ProviderConfig, ReviewTable, SchemaIssue, TableError, WorkflowSchema,
};
use serde::Serialize;

use crate::agents::{ItemReview, ReviewError, Reviewer};

/// Reviewers by agent name.
pub type ReviewerRegistry = BTreeMap<String, Reviewer>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundStats {
    pub round_id: String,
    pub rows_considered: usize,
    pub rows_passed_filter: usize,
    pub rows_skipped_null_inputs: usize,
    pub calls_succeeded: usize,
    pub calls_failed: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FailureRecord {
    pub round_id: String,
    /// Absent for row-level problems such as filter errors.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    pub row: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    #[serde(skip)]
    pub table: ReviewTable,
    pub ledger: CostLedger,
    pub total_cost: Decimal,
    pub rounds: Vec<RoundStats>,
    pub failures: Vec<FailureRecord>,
}

impl RunReport {
    /// Report without the table, as JSON with sorted keys.
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
        s.push('\n');
        s
    }

    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("workflow schema is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<SchemaIssue>),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Schema check against the registry's agents and their providers.
pub fn validate_with_registry(
    schema: &WorkflowSchema,
    base_columns: &[String],
    reviewers: &ReviewerRegistry,
) -> Result<(), Vec<SchemaIssue>> {
    let agents: Vec<AgentSpec> = reviewers.values().map(|r| r.spec().clone()).collect();
    let mut providers: Vec<ProviderConfig> = Vec::new();
    for r in reviewers.values() {
        if !providers.iter().any(|p| p.name == r.provider().name()) {
            providers.push(r.provider().config().clone());
        }
    }
    validate_schema(schema, base_columns, &agents, &providers)
}

struct Work {
    agent: usize,
    row: usize,
    item: Item,
    images: Vec<PathBuf>,
}

/// Runs every round of `schema` over `table`.
///
/// Per-call failures never abort the run: the affected cells stay null and a
/// failure record is added. Results are independent of completion order.
pub async fn run_workflow(
    schema: &WorkflowSchema,
    table: &ReviewTable,
    reviewers: &ReviewerRegistry,
) -> Result<RunReport, RunError> {
    validate_with_registry(schema, table.columns(), reviewers).map_err(RunError::Invalid)?;
    let mut table = table.clone();
    let mut ledger = CostLedger::default();
    let mut rounds = Vec::new();
    let mut failures = Vec::new();

    for round in &schema.rounds {
        let scope = rows_in_scope(round, &table);
        let agents: Vec<&Reviewer> = round.reviewers.iter().map(|n| &reviewers[n]).collect();

        for (row, e) in &scope.filter_errors {
            failures.push(FailureRecord {
                round_id: round.round_id.clone(),
                agent: None,
                row: *row,
                kind: "filter_error".into(),
                message: e.to_string(),
            });
        }

        let mut work = Vec::with_capacity(agents.len() * scope.rows.len());
        for agent in 0..agents.len() {
            for &row in &scope.rows {
                let cells = table.row(row).expect("row in range");
                let item = Item::new(round.text_inputs.iter().map(|c| {
                    (c.clone(), cells.get(c).flatten().unwrap_or_default().to_string())
                }));
                let images = round
                    .image_inputs
                    .iter()
                    .filter_map(|c| cells.get(c).flatten().map(PathBuf::from))
                    .collect();
                work.push(Work { agent, row, item, images });
            }
        }

        let agents_ref = &agents;
        let mut results: Vec<Vec<Option<Result<ItemReview, ReviewError>>>> =
            vec![vec![None; table.num_rows()]; agents.len()];
        let mut done = stream::iter(work)
            .map(|w| async move {
                let r = agents_ref[w.agent].review_item(w.row, &w.item, &w.images).await;
                (w.agent, w.row, r)
            })
            .buffer_unordered(schema.max_concurrency.max(1));
        while let Some((agent, row, r)) = done.next().await {
            results[agent][row] = Some(r);
        }
        drop(done);

        let mut stats = RoundStats {
            round_id: round.round_id.clone(),
            rows_considered: table.num_rows(),
            rows_passed_filter: scope.passed_filter,
            rows_skipped_null_inputs: scope.null_inputs.len(),
            calls_succeeded: 0,
            calls_failed: 0,
            input_tokens: 0,
            output_tokens: 0,
            cost: Decimal::ZERO,
        };
        let mut new_columns: Vec<(String, Vec<Cell>)> = Vec::new();
        for (reviewer, slots) in agents.iter().zip(results) {
            let names = agent_columns(&round.round_id, reviewer.spec());
            let fields: Vec<&str> = reviewer.schema().field_names().collect();
            let mut cols: Vec<Vec<Cell>> = vec![vec![None; table.num_rows()]; names.len()];
            for (row, slot) in slots.into_iter().enumerate() {
                match slot {
                    None => {}
                    Some(Ok(review)) => {
                        for (j, f) in fields.iter().enumerate() {
                            cols[j][row] = review.output.get(f).map(|v| v.to_cell());
                        }
                        cols[fields.len()][row] = Some(review.output.to_canonical_json());
                        stats.calls_succeeded += 1;
                        stats.input_tokens += review.usage.input_tokens;
                        stats.output_tokens += review.usage.output_tokens;
                        stats.cost += review.cost;
                        ledger.push(LedgerEntry {
                            agent: reviewer.name().to_string(),
                            round_id: round.round_id.clone(),
                            row,
                            input_tokens: review.usage.input_tokens,
                            output_tokens: review.usage.output_tokens,
                            cost: review.cost,
                        });
                    }
                    Some(Err(e)) => {
                        stats.calls_failed += 1;
                        failures.push(FailureRecord {
                            round_id: round.round_id.clone(),
                            agent: Some(reviewer.name().to_string()),
                            row,
                            kind: e.kind().into(),
                            message: e.to_string(),
                        });
                    }
                }
            }
            new_columns.extend(names.into_iter().zip(cols));
        }
        table.append_columns_in_place(new_columns)?;
        rounds.push(stats);
    }

    let total_cost = ledger.total_cost();
    Ok(RunReport {
        table,
        ledger,
        total_cost,
        rounds,
        failures,
    })
}

/// Blocking wrapper around [`run_workflow`] with its own runtime.
pub fn run_workflow_blocking(
    schema: &WorkflowSchema,
    table: &ReviewTable,
    reviewers: &ReviewerRegistry,
) -> Result<RunReport, RunError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime")
        .block_on(run_workflow(schema, table, reviewers))
}

/// Builds a registry from reviewers, keyed by agent name.
pub fn registry<I: IntoIterator<Item = Reviewer>>(reviewers: I) -> ReviewerRegistry {
    reviewers.into_iter().map(|r| (r.name().to_string(), r)).collect()
}

/// Shares one mock backend among every given agent; handy for tests.
pub fn mock_registry(
    agents: Vec<AgentSpec>,
    script: crate::provider::MockScript,
) -> (ReviewerRegistry, Arc<crate::provider::MockBackend>) {
    use crate::provider::{MockBackend, Provider};
    let backend = Arc::new(MockBackend::new(script));
    let mut providers: BTreeMap<String, Arc<Provider>> = BTreeMap::new();
    let lookups = Default::default();
    let reviewers = agents
        .into_iter()
        .map(|spec| {
            let p = providers
                .entry(spec.provider.clone())
                .or_insert_with(|| {
                    Arc::new(Provider::mock(
                        ProviderConfig::mock(spec.provider.clone(), "inline"),
                        backend.clone(),
                    ))
                })
                .clone();
            Reviewer::new(spec, p, &lookups).expect("valid agent")
        })
        .collect::<Vec<_>>();
    (registry(reviewers), backend)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::MockScript;
    use roundtable_core::{parse_filter, AgentKind, RoundSpec, TitleAbstractSpec};

    fn ta(name: &str) -> AgentSpec {
        AgentSpec::new(
            name,
            "p",
            AgentKind::TitleAbstract(TitleAbstractSpec {
                inclusion_criteria: "AI in radiology".into(),
                exclusion_criteria: "Not specified".into(),
            }),
        )
    }

    fn eval(e: i64) -> String {
        format!(r#"{{"reasoning":"r","evaluation":{e},"certainty":70}}"#)
    }

    fn table(n: usize) -> ReviewTable {
        let rows = (0..n)
            .map(|i| vec![Some(format!("T{i}")), Some(format!("A{i}"))])
            .collect();
        ReviewTable::from_rows(["title", "abstract"], rows).unwrap()
    }

    fn two_rounds() -> WorkflowSchema {
        WorkflowSchema::new(vec![
            RoundSpec::new("A", ["Alice", "Bob"], ["title", "abstract"]),
            RoundSpec::new("B", ["Carol"], ["title", "abstract", "round-A_Alice_output", "round-A_Bob_output"])
                .with_filter(parse_filter("round-A_Alice_evaluation != round-A_Bob_evaluation").unwrap()),
        ])
    }

    fn rt() -> tokio::runtime::Runtime {
        tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap()
    }

    #[test]
    fn disagreement_rows_reach_round_b() {
        let mut script = MockScript::constant(eval(4));
        script = script.with_row("Bob", 1, eval(2)).with_row("Bob", 3, eval(5));
        let (reg, _) = mock_registry(vec![ta("Alice"), ta("Bob"), ta("Carol")], script);
        let report = rt().block_on(run_workflow(&two_rounds(), &table(4), &reg)).unwrap();
        let col = report.table.column_cells("round-B_Carol_evaluation").unwrap();
        assert_eq!(col, vec![None, Some("4"), None, Some("4")]);
        assert_eq!(report.rounds[1].rows_passed_filter, 2);
        assert_eq!(report.ledger.entries.len(), 4 * 2 + 2);
    }

    #[test]
    fn zero_rows() {
        let (reg, _) = mock_registry(vec![ta("Alice"), ta("Bob"), ta("Carol")], MockScript::constant(eval(3)));
        let report = rt().block_on(run_workflow(&two_rounds(), &table(0), &reg)).unwrap();
        assert_eq!(report.table.num_rows(), 0);
        assert_eq!(report.table.num_columns(), 2 + 4 * 3);
        assert_eq!(report.total_cost, Decimal::ZERO);
    }

    #[test]
    fn structural_count() {
        let schema = WorkflowSchema::new(vec![RoundSpec::new("A", ["Alice"], ["title"])]);
        let (reg, _) = mock_registry(vec![ta("Alice")], MockScript::constant(eval(3)));
        let report = rt().block_on(run_workflow(&schema, &table(2), &reg)).unwrap();
        assert_eq!(report.table.num_columns(), 2 + 3 + 1);
        assert_eq!(
            report.table.cell(0, "round-A_Alice_output"),
            Some(Some(r#"{"certainty":70,"evaluation":3,"reasoning":"r"}"#))
        );
    }

    #[test]
    fn invalid_schema_aborts() {
        let schema = WorkflowSchema::new(vec![RoundSpec::new("A", ["Zed"], ["title"])]);
        let (reg, _) = mock_registry(vec![ta("Alice")], MockScript::constant(eval(3)));
        let err = rt().block_on(run_workflow(&schema, &table(1), &reg)).unwrap_err();
        assert!(matches!(err, RunError::Invalid(_)));
    }
}
