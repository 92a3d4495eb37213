//! Command-line entry points.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use roundtable_core::metrics::{render_text_table, roc_points};
use roundtable_core::{apply_consensus, evaluate, ConsensusConfig, Decimal, ThresholdStrategy};

use crate::agents::LookupRegistry;
use crate::config::{load_config, WorkflowConfig};
use crate::engine::{run_workflow_blocking, validate_with_registry};
use crate::io::{read_dataset, write_dataset, Format};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_PARTIAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "roundtable", version, about = "Multi-agent LLM screening and abstraction over tabular datasets")]
pub struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a workflow over a dataset.
    Run(RunArgs),
    /// Check a workflow config (and its columns, given an input) without calling any provider.
    Validate(ValidateArgs),
    /// Combine two junior scores and a senior score into a final score column.
    Consensus(ConsensusArgs),
    /// Screening metrics for a score column against 0/1 labels.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub workflow: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Output format; inferred from the output extension when omitted.
    #[arg(long)]
    pub format: Option<Format>,
    /// Where to write the run report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Overrides `settings.env_file`.
    #[arg(long)]
    pub env_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub workflow: PathBuf,
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConsensusArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Junior score columns (exactly two). Taken from the workflow's
    /// `[consensus]` section when omitted.
    #[arg(long)]
    pub junior: Vec<String>,
    #[arg(long)]
    pub senior: Option<String>,
    #[arg(long)]
    pub out_col: Option<String>,
    #[arg(long)]
    pub neutral: Option<u8>,
    #[arg(long)]
    pub workflow: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub score_col: String,
    #[arg(long)]
    pub label_col: String,
    #[arg(long, value_delimiter = ',', default_value = "1.5,3.0,4.5")]
    pub thresholds: Vec<String>,
    /// Write ROC points as `fpr,tpr` CSV.
    #[arg(long)]
    pub roc_out: Option<PathBuf>,
    /// Write the report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Print JSON instead of the text table.
    #[arg(long)]
    pub json: bool,
    /// Dataset label for the text table; defaults to the input file stem.
    #[arg(long)]
    pub dataset: Option<String>,
}

/// Error carrying the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn invalid(message: impl ToString) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.to_string(),
        }
    }

    fn runtime(message: impl ToString) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.to_string(),
        }
    }
}

fn input_format(path: &Path) -> Format {
    Format::from_path(path)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn load(path: &Path, env_file: Option<&Path>) -> Result<WorkflowConfig, Failure> {
    let mut config = load_config(path).map_err(Failure::invalid)?;
    if let Some(f) = env_file {
        config.env_file_vars = crate::config::read_env_file(f).map_err(Failure::invalid)?;
    }
    Ok(config)
}

pub fn cmd_run(args: &RunArgs) -> Result<u8, Failure> {
    let config = load(&args.workflow, args.env_file.as_deref())?;
    let dataset = read_dataset(&args.input, input_format(&args.input)).map_err(|e| {
        Failure::runtime(format!("{}: {e}", args.input.display()))
    })?;
    let reviewers = config
        .build_reviewers(&LookupRegistry::new())
        .map_err(Failure::invalid)?;
    if let Err(issues) = validate_with_registry(&config.schema, dataset.table.columns(), &reviewers) {
        let lines: Vec<String> = issues.iter().map(ToString::to_string).collect();
        return Err(Failure::invalid(format!("invalid workflow:\n  {}", lines.join("\n  "))));
    }
    let report = run_workflow_blocking(&config.schema, &dataset.table, &reviewers).map_err(Failure::runtime)?;
    let format = args.format.unwrap_or_else(|| Format::from_path(&args.output));
    write_dataset(&report.table, &args.output, format)
        .map_err(|e| Failure::runtime(format!("{}: {e}", args.output.display())))?;
    if let Some(path) = &args.report {
        write_text(path, &report.to_json())?;
    }
    for f in &report.failures {
        let who = f.agent.as_deref().unwrap_or("-");
        eprintln!("round {} agent {who} row {}: {}: {}", f.round_id, f.row, f.kind, f.message);
    }
    log::info!(
        "{} calls, total cost {}",
        report.ledger.entries.len(),
        report.total_cost
    );
    Ok(if report.is_partial() { EXIT_PARTIAL } else { EXIT_OK })
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<u8, Failure> {
    let config = load(&args.workflow, None)?;
    if let Some(input) = &args.input {
        let dataset = read_dataset(input, input_format(input))
            .map_err(|e| Failure::invalid(format!("{}: {e}", input.display())))?;
        if let Err(issues) = roundtable_core::validate_schema(
            &config.schema,
            dataset.table.columns(),
            &config.agents,
            &config.providers,
        ) {
            let lines: Vec<String> = issues.iter().map(ToString::to_string).collect();
            return Err(Failure::invalid(format!("invalid workflow:\n  {}", lines.join("\n  "))));
        }
    }
    eprintln!(
        "ok: {} provider(s), {} agent(s), {} round(s)",
        config.providers.len(),
        config.agents.len(),
        config.schema.rounds.len()
    );
    Ok(EXIT_OK)
}

pub fn cmd_consensus(args: &ConsensusArgs) -> Result<u8, Failure> {
    let from_config = match &args.workflow {
        Some(w) => load(w, None)?.consensus,
        None => None,
    };
    let mut cfg = match (args.junior.as_slice(), &args.senior, &args.out_col) {
        ([j1, j2], Some(s), Some(o)) => ConsensusConfig::new(j1, j2, s, o),
        ([], None, None) => from_config.ok_or_else(|| {
            Failure::invalid("give --junior twice, --senior and --out-col, or a --workflow with [consensus]")
        })?,
        _ => {
            return Err(Failure::invalid(
                "consensus needs exactly two --junior columns plus --senior and --out-col",
            ))
        }
    };
    if let Some(n) = args.neutral {
        cfg.neutral_score = n;
    }
    let dataset = read_dataset(&args.input, input_format(&args.input))
        .map_err(|e| Failure::runtime(format!("{}: {e}", args.input.display())))?;
    let (table, failures) = apply_consensus(&dataset.table, &cfg).map_err(Failure::invalid)?;
    write_dataset(&table, &args.output, Format::from_path(&args.output))
        .map_err(|e| Failure::runtime(format!("{}: {e}", args.output.display())))?;
    for f in &failures {
        eprintln!("row {}: {}", f.row, f.reason);
    }
    Ok(if failures.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<u8, Failure> {
    let strategies = args
        .thresholds
        .iter()
        .map(|t| {
            let d = Decimal::from_str(t.trim()).map_err(|_| Failure::invalid(format!("bad threshold `{t}`")))?;
            ThresholdStrategy::from_threshold(d).map_err(Failure::invalid)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dataset = read_dataset(&args.input, input_format(&args.input))
        .map_err(|e| Failure::runtime(format!("{}: {e}", args.input.display())))?;
    let report = evaluate(&dataset.table, &args.score_col, &args.label_col, &strategies).map_err(Failure::invalid)?;
    let json = {
        let v = serde_json::to_value(&report).expect("report serializes");
        let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
        s.push('\n');
        s
    };
    if let Some(path) = &args.report {
        write_text(path, &json)?;
    }
    if let Some(path) = &args.roc_out {
        let data = roundtable_core::metrics::labeled_scores(&dataset.table, &args.score_col, &args.label_col)
            .map_err(Failure::invalid)?;
        let points = roc_points(&data.scores, &data.labels).map_err(Failure::invalid)?;
        let mut text = String::from("fpr,tpr\n");
        for (x, y) in points {
            text.push_str(&format!("{x},{y}\n"));
        }
        write_text(path, &text)?;
    }
    let name = args.dataset.clone().unwrap_or_else(|| {
        args.input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let out = if args.json { json } else { render_text_table(&name, &report) };
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(out.as_bytes())
        .map_err(|e| Failure::runtime(format!("stdout: {e}")))?;
    Ok(EXIT_OK)
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID } else { EXIT_OK });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Consensus(a) => cmd_consensus(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
