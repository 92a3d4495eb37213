//! Runtime for roundtable review workflows: provider transports, the
//! concurrent workflow engine, dataset files, TOML configs and the CLI.
//!
//! The pure model (tables, filters, schemas, prompts, consensus, metrics)
//! lives in `roundtable-core` and is re-exported as [`core`].

pub mod agents;
pub mod cli;
pub mod config;
pub mod engine;
pub mod io;
pub mod provider;

pub use roundtable_core as core;

pub use agents::{validate_images, ContextLookup, ImageIssue, ItemReview, ReviewBatch, ReviewError, Reviewer};
pub use config::{load_config, ConfigError, WorkflowConfig};
pub use engine::{run_workflow, run_workflow_blocking, FailureRecord, RoundStats, RunError, RunReport};
pub use io::{read_dataset, write_dataset, Dataset, Format, IoError};
pub use provider::{CallKey, MockBackend, MockScript, Provider, ProviderError};
