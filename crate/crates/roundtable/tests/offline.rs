//! Mock-only runs and config validation must never build an HTTP client.

mod common;

use common::*;
use roundtable::agents::LookupRegistry;
use roundtable::provider::http_clients_built;

#[test]
fn mock_runs_and_validation_stay_offline() {
    let fx = figure2();
    let remote = roundtable::load_config(&fx.join("workflow.toml")).unwrap();
    assert!(remote.uses_network());
    let table = roundtable::read_dataset(&fx.join("articles.csv"), roundtable::Format::Csv).unwrap().table;
    roundtable_core::validate_schema(&remote.schema, table.columns(), &remote.agents, &remote.providers).unwrap();

    let config = roundtable::load_config(&fx.join("workflow_mock.toml")).unwrap();
    assert!(!config.uses_network());
    let reviewers = config.build_reviewers(&LookupRegistry::new()).unwrap();
    let report = roundtable::run_workflow_blocking(&config.schema, &table, &reviewers).unwrap();
    assert!(report.failures.is_empty());

    let args = roundtable::cli::ValidateArgs { workflow: fx.join("workflow.toml"), input: Some(fx.join("articles.csv")) };
    assert_eq!(roundtable::cli::cmd_validate(&args).unwrap(), 0);

    assert_eq!(http_clients_built(), 0);
}
