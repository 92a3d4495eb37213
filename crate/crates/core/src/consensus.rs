//! Junior/senior consensus and threshold strategies.
//!
//! Two junior reviewers score each item on 1–5. When they disagree, or both
//! give the neutral score, the senior's score is final. Otherwise the final
//! score is the juniors' mean. A threshold strategy then includes every item
//! whose final score is at least the threshold.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use rust_decimal::Decimal;
use serde::Serialize;
use thiserror::Error;

use crate::table::{ReviewTable, TableError};

pub const MIN_SCORE: u8 = 1;
pub const MAX_SCORE: u8 = 5;
pub const DEFAULT_NEUTRAL_SCORE: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("score {0} is outside 1..=5")]
    OutOfRange(i64),
    #[error("scores differ or are both neutral, but no senior score was given")]
    MissingSenior,
    #[error("column `{0}` not found")]
    ColumnMissing(String),
    #[error("row {row}, column `{column}`: {value:?} is not an integer score")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: score {value} is outside 1..=5")]
    CellOutOfRange { row: usize, column: String, value: i64 },
    #[error("junior and senior columns must be three distinct columns")]
    ColumnsNotDistinct,
    #[error(transparent)]
    Table(#[from] TableError),
}

fn check(s: u8) -> Result<u8, ConsensusError> {
    if (MIN_SCORE..=MAX_SCORE).contains(&s) {
        Ok(s)
    } else {
        Err(ConsensusError::OutOfRange(s.into()))
    }
}

/// True when the juniors disagree or both gave `neutral`.
pub fn needs_senior_with(s1: u8, s2: u8, neutral: u8) -> Result<bool, ConsensusError> {
    let (s1, s2) = (check(s1)?, check(s2)?);
    Ok(s1 != s2 || (s1 == neutral && s2 == neutral))
}

pub fn needs_senior(s1: u8, s2: u8) -> Result<bool, ConsensusError> {
    needs_senior_with(s1, s2, DEFAULT_NEUTRAL_SCORE)
}

pub fn final_score_with(
    s1: u8,
    s2: u8,
    senior: Option<u8>,
    neutral: u8,
) -> Result<Decimal, ConsensusError> {
    if needs_senior_with(s1, s2, neutral)? {
        let senior = senior.ok_or(ConsensusError::MissingSenior)?;
        Ok(Decimal::from(check(senior)?))
    } else {
        Ok(Decimal::from(u16::from(s1) + u16::from(s2)) / Decimal::TWO)
    }
}

/// The senior's score when escalation is needed, otherwise the juniors' mean.
pub fn final_score(s1: u8, s2: u8, senior: Option<u8>) -> Result<Decimal, ConsensusError> {
    final_score_with(s1, s2, senior, DEFAULT_NEUTRAL_SCORE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Include,
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("threshold {0} must lie in (1, 5]")]
pub struct ThresholdError(pub Decimal);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ThresholdStrategy {
    pub name: String,
    pub threshold: Decimal,
}

impl ThresholdStrategy {
    pub fn new(name: impl Into<String>, threshold: Decimal) -> Result<Self, ThresholdError> {
        if threshold <= Decimal::ONE || threshold > Decimal::from(MAX_SCORE) {
            return Err(ThresholdError(threshold));
        }
        Ok(Self {
            name: name.into(),
            threshold,
        })
    }

    /// Maximizes recall.
    pub fn sensitive() -> Self {
        Self::new("sensitive", Decimal::new(15, 1)).expect("in range")
    }

    pub fn balanced() -> Self {
        Self::new("balanced", Decimal::new(30, 1)).expect("in range")
    }

    /// Maximizes precision.
    pub fn specific() -> Self {
        Self::new("specific", Decimal::new(45, 1)).expect("in range")
    }

    pub fn standard() -> [Self; 3] {
        [Self::sensitive(), Self::balanced(), Self::specific()]
    }

    /// Uses the standard name for 1.5, 3.0 and 4.5, `T=<value>` otherwise.
    pub fn from_threshold(threshold: Decimal) -> Result<Self, ThresholdError> {
        Self::standard()
            .into_iter()
            .find(|s| s.threshold == threshold)
            .map(Ok)
            .unwrap_or_else(|| Self::new(format!("T={threshold}"), threshold))
    }

    pub fn classify(&self, score: Decimal) -> Decision {
        classify(score, self)
    }
}

/// Include iff `score >= threshold`.
pub fn classify(score: Decimal, strategy: &ThresholdStrategy) -> Decision {
    if score >= strategy.threshold {
        Decision::Include
    } else {
        Decision::Exclude
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusConfig {
    pub junior_columns: [String; 2],
    pub senior_column: String,
    pub output_column: String,
    pub neutral_score: u8,
}

impl ConsensusConfig {
    pub fn new(
        junior1: impl Into<String>,
        junior2: impl Into<String>,
        senior: impl Into<String>,
        output: impl Into<String>,
    ) -> Self {
        Self {
            junior_columns: [junior1.into(), junior2.into()],
            senior_column: senior.into(),
            output_column: output.into(),
            neutral_score: DEFAULT_NEUTRAL_SCORE,
        }
    }
}

/// A row whose final score could not be produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConsensusFailure {
    pub row: usize,
    pub reason: String,
}

fn parse_score(
    row: usize,
    column: &str,
    cell: Option<&str>,
) -> Result<Option<u8>, ConsensusError> {
    let Some(text) = cell else {
        return Ok(None);
    };
    let non_numeric = || ConsensusError::NonNumeric {
        row,
        column: column.into(),
        value: text.into(),
    };
    let d = Decimal::from_str(text.trim()).map_err(|_| non_numeric())?;
    if !d.fract().is_zero() {
        return Err(non_numeric());
    }
    let v: i64 = d.trunc().try_into().map_err(|_| non_numeric())?;
    if !(i64::from(MIN_SCORE)..=i64::from(MAX_SCORE)).contains(&v) {
        return Err(ConsensusError::CellOutOfRange {
            row,
            column: column.into(),
            value: v,
        });
    }
    Ok(Some(v as u8))
}

/// Renders a final score with one decimal place, e.g. `4.0` or `2.5`.
pub fn format_score(score: Decimal) -> String {
    format!("{score:.1}")
}

/// Appends `output_column` holding each row's final score.
///
/// Rows that need the senior but have none, or lack a junior score, get a
/// null output and a failure record.
pub fn apply_consensus(
    table: &ReviewTable,
    config: &ConsensusConfig,
) -> Result<(ReviewTable, Vec<ConsensusFailure>), ConsensusError> {
    let [j1, j2] = &config.junior_columns;
    let senior = &config.senior_column;
    if j1 == j2 || j1 == senior || j2 == senior {
        return Err(ConsensusError::ColumnsNotDistinct);
    }
    let col = |name: &str| {
        table
            .column_cells(name)
            .map_err(|_| ConsensusError::ColumnMissing(name.into()))
    };
    let (c1, c2, cs) = (col(j1)?, col(j2)?, col(senior)?);

    let mut values = Vec::with_capacity(table.num_rows());
    let mut failures = Vec::new();
    for row in 0..table.num_rows() {
        let s1 = parse_score(row, j1, c1[row])?;
        let s2 = parse_score(row, j2, c2[row])?;
        let (Some(s1), Some(s2)) = (s1, s2) else {
            failures.push(ConsensusFailure {
                row,
                reason: "missing junior score".to_string(),
            });
            values.push(None);
            continue;
        };
        let escalate = needs_senior_with(s1, s2, config.neutral_score)?;
        let senior_score = if escalate {
            parse_score(row, senior, cs[row])?
        } else {
            None
        };
        match final_score_with(s1, s2, senior_score, config.neutral_score) {
            Ok(score) => values.push(Some(format_score(score))),
            Err(ConsensusError::MissingSenior) => {
                failures.push(ConsensusFailure {
                    row,
                    reason: ConsensusError::MissingSenior.to_string(),
                });
                values.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let out = table.append_columns([(config.output_column.clone(), values)])?;
    Ok((out, failures))
}
