//! Screening metrics against ground-truth labels.
//!
//! AUC uses the Mann–Whitney form: the fraction of (positive, negative)
//! pairs in which the positive scores higher, with ties credited one half.
//! It is computed exactly as a rational number.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use num_rational::Ratio;
use rust_decimal::Decimal;
use serde::Serialize;
use thiserror::Error;

use crate::consensus::{classify, Decision, ThresholdStrategy};
use crate::table::ReviewTable;

pub type Rate = Ratio<u64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("predictions ({predictions}) and labels ({labels}) differ in length")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("AUC needs at least one positive and one negative label")]
    DegenerateLabels,
    #[error("no rows to evaluate")]
    Empty,
    #[error("column `{0}` not found")]
    ColumnMissing(String),
    #[error("row {row}, column `{column}`: cannot parse {value:?}")]
    Unparsable {
        row: usize,
        column: String,
        value: String,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(predictions: &[Decision], labels: &[bool]) -> Result<Confusion, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut c = Confusion::default();
    for (p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (Decision::Include, true) => c.tp += 1,
            (Decision::Include, false) => c.fp += 1,
            (Decision::Exclude, false) => c.tn += 1,
            (Decision::Exclude, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prf {
    pub accuracy: Rate,
    /// `None` when there are no positive labels.
    pub recall: Option<Rate>,
    /// `None` when nothing was predicted positive.
    pub precision: Option<Rate>,
}

fn ratio(num: u64, den: u64) -> Option<Rate> {
    (den != 0).then(|| Ratio::new(num, den))
}

pub fn prf(c: &Confusion) -> Result<Prf, MetricsError> {
    Ok(Prf {
        accuracy: ratio(c.tp + c.tn, c.n()).ok_or(MetricsError::Empty)?,
        recall: ratio(c.tp, c.tp + c.fn_),
        precision: ratio(c.tp, c.tp + c.fp),
    })
}

pub fn rate_to_f64(r: Rate) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn check_lengths(scores: &[Decimal], labels: &[bool]) -> Result<(u64, u64), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: scores.len(),
            labels: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::DegenerateLabels);
    }
    Ok((pos, neg))
}

/// Groups of tied scores, highest first, as (positives, negatives) counts.
fn tie_groups(scores: &[Decimal], labels: &[bool]) -> Vec<(u64, u64)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].cmp(&scores[a]));
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut prev: Option<Decimal> = None;
    for i in idx {
        if prev != Some(scores[i]) {
            groups.push((0, 0));
            prev = Some(scores[i]);
        }
        let g = groups.last_mut().expect("pushed above");
        if labels[i] {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Exact Mann–Whitney AUC.
pub fn roc_auc(scores: &[Decimal], labels: &[bool]) -> Result<Rate, MetricsError> {
    let (pos, neg) = check_lengths(scores, labels)?;
    // walk from the lowest score up, counting negatives strictly below
    let mut neg_below = 0u64;
    let mut twice_wins = 0u64;
    for &(p, n) in tie_groups(scores, labels).iter().rev() {
        twice_wins += 2 * p * neg_below + p * n;
        neg_below += n;
    }
    Ok(Ratio::new(twice_wins, 2 * pos * neg))
}

/// ROC staircase: `(0, 0)` followed by one `(fpr, tpr)` point per distinct
/// score, thresholds descending. The last point is always `(1, 1)`.
pub fn roc_points_exact(
    scores: &[Decimal],
    labels: &[bool],
) -> Result<Vec<(Rate, Rate)>, MetricsError> {
    let (pos, neg) = check_lengths(scores, labels)?;
    let mut points = Vec::new();
    points.push((Ratio::from_integer(0), Ratio::from_integer(0)));
    let (mut tp, mut fp) = (0u64, 0u64);
    for (p, n) in tie_groups(scores, labels) {
        tp += p;
        fp += n;
        points.push((Ratio::new(fp, neg), Ratio::new(tp, pos)));
    }
    Ok(points)
}

pub fn roc_points(scores: &[Decimal], labels: &[bool]) -> Result<Vec<(f64, f64)>, MetricsError> {
    Ok(roc_points_exact(scores, labels)?
        .into_iter()
        .map(|(x, y)| (rate_to_f64(x), rate_to_f64(y)))
        .collect())
}

/// Trapezoidal area under a polyline given in increasing x.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyMetrics {
    pub strategy: String,
    pub threshold: Decimal,
    #[serde(flatten)]
    pub confusion: Confusion,
    pub accuracy: f64,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub score_column: String,
    pub label_column: String,
    /// Rows with a score.
    pub n: usize,
    pub n_positive: usize,
    pub positive_rate: f64,
    /// Rows left out because their score cell is null.
    pub excluded_null_scores: usize,
    pub strategies: Vec<StrategyMetrics>,
    pub auc: Option<f64>,
    /// Why `auc` is missing, when it is.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc_error: Option<String>,
}

/// Parsed (score, label) pairs from a table plus how many rows had no score.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledScores {
    pub scores: Vec<Decimal>,
    pub labels: Vec<bool>,
    pub excluded_null_scores: usize,
}

fn parse_label(text: &str) -> Option<bool> {
    match text.trim() {
        "1" => Some(true),
        "0" => Some(false),
        other => match Decimal::from_str(other).ok()? {
            d if d == Decimal::ONE => Some(true),
            d if d.is_zero() => Some(false),
            _ => None,
        },
    }
}

pub fn labeled_scores(
    table: &ReviewTable,
    score_column: &str,
    label_column: &str,
) -> Result<LabeledScores, MetricsError> {
    let col = |name: &str| {
        table
            .column_cells(name)
            .map_err(|_| MetricsError::ColumnMissing(name.into()))
    };
    let (scores, labels) = (col(score_column)?, col(label_column)?);
    let mut out = LabeledScores::default();
    for (row, (s, l)) in scores.into_iter().zip(labels).enumerate() {
        let Some(s) = s else {
            out.excluded_null_scores += 1;
            continue;
        };
        let unparsable = |column: &str, value: &str| MetricsError::Unparsable {
            row,
            column: column.into(),
            value: value.into(),
        };
        let score = Decimal::from_str(s.trim())
            .or_else(|_| Decimal::from_scientific(s.trim()))
            .map_err(|_| unparsable(score_column, s))?;
        let label_text = l.ok_or_else(|| unparsable(label_column, "<null>"))?;
        let label = parse_label(label_text).ok_or_else(|| unparsable(label_column, label_text))?;
        out.scores.push(score);
        out.labels.push(label);
    }
    Ok(out)
}

pub fn evaluate_scores(
    data: &LabeledScores,
    strategies: &[ThresholdStrategy],
) -> Result<Vec<StrategyMetrics>, MetricsError> {
    strategies
        .iter()
        .map(|s| {
            let preds: Vec<Decision> = data.scores.iter().map(|&x| classify(x, s)).collect();
            let c = confusion(&preds, &data.labels)?;
            let m = prf(&c)?;
            Ok(StrategyMetrics {
                strategy: s.name.clone(),
                threshold: s.threshold,
                confusion: c,
                accuracy: rate_to_f64(m.accuracy),
                recall: m.recall.map(rate_to_f64),
                precision: m.precision.map(rate_to_f64),
            })
        })
        .collect()
}

/// Metrics for one scored, labelled table.
pub fn evaluate(
    table: &ReviewTable,
    score_column: &str,
    label_column: &str,
    strategies: &[ThresholdStrategy],
) -> Result<MetricsReport, MetricsError> {
    let data = labeled_scores(table, score_column, label_column)?;
    if data.scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = data.scores.len();
    let n_positive = data.labels.iter().filter(|&&l| l).count();
    let (auc, auc_error) = match roc_auc(&data.scores, &data.labels) {
        Ok(r) => (Some(rate_to_f64(r)), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(MetricsReport {
        score_column: score_column.into(),
        label_column: label_column.into(),
        n,
        n_positive,
        positive_rate: n_positive as f64 / n as f64,
        excluded_null_scores: data.excluded_null_scores,
        strategies: evaluate_scores(&data, strategies)?,
        auc,
        auc_error,
    })
}

fn fmt4(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

/// Aligned text rendering: dataset, n (% positive), one cell per strategy
/// and the AUC.
pub fn render_text_table(dataset: &str, report: &MetricsReport) -> String {
    let mut header: Vec<String> = Vec::new();
    let mut cells: Vec<String> = Vec::new();
    header.push("Dataset".into());
    cells.push(dataset.into());
    header.push("Number of Articles (% Relevant)".into());
    cells.push(format!("{} ({:.2})", report.n, report.positive_rate * 100.0));
    for s in &report.strategies {
        let mut name = s.strategy.clone();
        if let Some(first) = name.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        header.push(format!("{name} (T = {})", s.threshold));
        cells.push(format!(
            "Accuracy={}, Recall={}, Precision={}",
            fmt4(Some(s.accuracy)),
            fmt4(s.recall),
            fmt4(s.precision)
        ));
    }
    header.push("AUC".into());
    cells.push(fmt4(report.auc));

    let widths: Vec<usize> = header
        .iter()
        .zip(&cells)
        .map(|(h, c)| h.chars().count().max(c.chars().count()))
        .collect();
    let line = |items: &[String]| {
        let mut s = String::new();
        for (i, (item, w)) in items.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str(" | ");
            }
            s.push_str(item);
            s.extend(core::iter::repeat_n(' ', w - item.chars().count()));
        }
        s.trim_end().to_string()
    };
    let rule: String = widths
        .iter()
        .map(|w| "-".repeat(*w))
        .collect::<Vec<_>>()
        .join("-+-");
    format!("{}\n{}\n{}\n", line(&header), rule, line(&cells))
}
