//! Classification metrics and paired significance testing over day-level
//! predictions, plus the report writers.
//!
//! Accuracy is symmetric in the positive class; precision, recall, and F1
//! are not, so every report states which class was treated as positive
//! (default `Up`, configurable).

pub mod report;
pub mod stats;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::TrendLabel;
use crate::pipeline::DayPrediction;
use crate::scalar::{RealScalar, Scalar};
use crate::Real;

pub use report::{write_results, write_series, write_table, RunReport, SeriesRow};
pub use stats::{regularized_incomplete_beta, standard_normal_cdf, student_t_two_sided_p};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("predictions and truths misaligned: {0}")]
    Misaligned(String),
    #[error("paired t-test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Binary confusion counts relative to a stated positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub positive_class: TrendLabel,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Count tp/fp/tn/fn over date-aligned prediction and truth sequences.
pub fn confusion(
    preds: &[(NaiveDate, TrendLabel)],
    truths: &[(NaiveDate, TrendLabel)],
    positive_class: TrendLabel,
) -> Result<ConfusionCounts, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    if preds.len() != truths.len() {
        return Err(EvalError::Misaligned(format!(
            "{} predictions vs {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let mut counts = ConfusionCounts {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
        positive_class,
    };
    for ((pd, pred), (td, truth)) in preds.iter().zip(truths) {
        if pd != td {
            return Err(EvalError::Misaligned(format!(
                "prediction date {pd} vs truth date {td}"
            )));
        }
        match (*pred == positive_class, *truth == positive_class) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, false) => counts.tn += 1,
            (false, true) => counts.fn_ += 1,
        }
    }
    Ok(counts)
}

/// Accuracy, precision, recall, F1 over one run.
///
/// Zero-denominator metrics are defined as 0 and flagged rather than erroring.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow<F = Real> {
    pub acc: F,
    pub precision: F,
    pub recall: F,
    pub f1: F,
    pub n_days: usize,
    pub fallback_rate: F,
    pub zero_denominator: bool,
}

/// Compute the metric row from confusion counts. Generic over the scalar so
/// the oracle suite can run it on exact rationals.
pub fn metrics<F: Scalar>(c: &ConfusionCounts) -> Result<MetricsRow<F>, EvalError> {
    let total = c.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let count = F::from_count;
    let mut zero_denominator = false;
    let mut ratio = |num: usize, den: usize| {
        if den == 0 {
            zero_denominator = true;
            F::zero()
        } else {
            count(num) / count(den)
        }
    };
    let acc = ratio(c.tp + c.tn, total);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let two = count(2);
    let pr = precision.clone() + recall.clone();
    let f1 = if pr > F::zero() {
        two * precision.clone() * recall.clone() / pr
    } else {
        zero_denominator = true;
        F::zero()
    };
    Ok(MetricsRow {
        acc,
        precision,
        recall,
        f1,
        n_days: total,
        fallback_rate: F::zero(),
        zero_denominator,
    })
}

/// Metrics for a day-prediction run, including the fallback rate.
pub fn evaluate_predictions(
    preds: &[DayPrediction],
    positive_class: TrendLabel,
) -> Result<MetricsRow, EvalError> {
    let p: Vec<(NaiveDate, TrendLabel)> = preds.iter().map(|d| (d.date, d.final_label)).collect();
    let t: Vec<(NaiveDate, TrendLabel)> = preds.iter().map(|d| (d.date, d.truth)).collect();
    let counts = confusion(&p, &t, positive_class)?;
    let mut row = metrics::<Real>(&counts)?;
    let fallbacks = preds.iter().filter(|d| d.fallback_used).count();
    row.fallback_rate = fallbacks as Real / preds.len() as Real;
    Ok(row)
}

/// Paired t-test outcome on per-day correctness indicators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignificanceResult<F = Real> {
    pub t_statistic: F,
    pub p_value: F,
    pub n_pairs: usize,
    /// Set when the difference vector was constant (no variance).
    pub degenerate: bool,
}

/// Two-sided paired t-test on {0,1} correctness sequences from two runs
/// over the same days. An all-zero difference vector yields the degenerate
/// result t = 0, p = 1.
pub fn paired_ttest<F: RealScalar>(a: &[bool], b: &[bool]) -> Result<SignificanceResult<F>, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Misaligned(format!(
            "{} vs {} correctness indicators",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewPairs(a.len()));
    }
    let n = a.len();
    let diffs: Vec<F> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| F::from_count(x as usize) - F::from_count(y as usize))
        .collect();
    let nf = F::from_count(n);
    let mean = diffs.iter().fold(F::zero(), |s, d| s + *d) / nf;
    let ss = diffs
        .iter()
        .fold(F::zero(), |s, d| s + (*d - mean) * (*d - mean));
    let var = ss / F::from_count(n - 1);
    if var == F::zero() {
        return Ok(if mean == F::zero() {
            SignificanceResult {
                t_statistic: F::zero(),
                p_value: F::one(),
                n_pairs: n,
                degenerate: true,
            }
        } else {
            SignificanceResult {
                t_statistic: if mean > F::zero() {
                    F::infinity()
                } else {
                    F::neg_infinity()
                },
                p_value: F::zero(),
                n_pairs: n,
                degenerate: true,
            }
        });
    }
    let se = (var / nf).sqrt();
    let t = mean / se;
    let p = stats::student_t_two_sided_p(t, F::from_count(n - 1));
    Ok(SignificanceResult {
        t_statistic: t,
        p_value: p,
        n_pairs: n,
        degenerate: false,
    })
}

/// Per-day correctness indicators of a run.
pub fn correctness(preds: &[DayPrediction]) -> Vec<bool> {
    preds.iter().map(|d| d.final_label == d.truth).collect()
}
