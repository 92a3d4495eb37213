//! Core of the roundtable review engine.
//!
//! Everything here is allocation-only and free of IO: the table model, the
//! filter language, output schemas and their validator, prompt rendering,
//! cost accounting, workflow schema checks, the junior/senior consensus rule
//! and screening metrics. Transports, concurrency and file formats live in
//! the `roundtable` crate.

#![no_std]

extern crate alloc;

pub mod agent;
pub mod consensus;
pub mod cost;
pub mod filter;
pub mod metrics;
pub mod prompt;
pub mod provider;
pub mod schema;
pub mod table;
pub mod workflow;

pub use agent::{
    output_schema_for, AbstractionKey, AbstractionSpec, AgentError, AgentKind, AgentSpec,
    ContextSpec, CustomSpec, FewShotExample, Reasoning, ScoringSpec, TitleAbstractSpec,
};
pub use consensus::{
    apply_consensus, classify, final_score, needs_senior, ConsensusConfig, ConsensusError,
    ConsensusFailure, Decision, ThresholdStrategy,
};
pub use cost::{estimate_cost, CostLedger, LedgerEntry, Price, Usage};
pub use filter::{eval_filter, parse_filter, FilterEvalError, FilterExpr, FilterParseError};
pub use metrics::{evaluate, roc_auc, roc_points, MetricsError, MetricsReport};
pub use prompt::{build_prompt, Item, PromptError};
pub use provider::{resolve_credential, CredentialError, ProviderConfig, ProviderKind, Secret};
pub use schema::{
    validate_response, FieldKind, FieldSpec, FieldValue, OutputSchema, ReviewOutput,
    ValidationError,
};
pub use table::{make_column_name, Cell, ReviewTable, TableError};
pub use workflow::{rows_in_scope, validate_schema, RoundScope, RoundSpec, SchemaIssue, WorkflowSchema};

pub use rust_decimal::Decimal;
