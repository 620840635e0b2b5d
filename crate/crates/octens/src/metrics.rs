//! Score binarization and per-label / macro-averaged F1.
//!
//! Per-label F1 is `2*tp / (2*tp + fp + fn)`; a zero denominator (no
//! positives in prediction or truth) yields F1 = 0, penalizing degenerate
//! all-negative predictors. The macro score is the plain mean over labels.

use crate::data::{LabelMatrix, ScoreMatrix};
use crate::error::{Error, Result};

/// Confusion quadruple for one label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Per-label F1 values, their mean, and the underlying counts.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub per_label_f1: Vec<f64>,
    pub macro_f1: f64,
    pub counts: Vec<ConfusionCounts>,
}

pub(crate) fn f1_from_counts(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * c.tp as f64 / denom as f64
    }
}

/// Thresholds every score: `value >= threshold` maps to 1. The default
/// ensemble threshold 0.5 makes this plain rounding.
pub fn binarize(scores: &ScoreMatrix, threshold: f64) -> Result<LabelMatrix> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Param(format!("threshold {threshold} outside (0,1)")));
    }
    let values = scores
        .values()
        .iter()
        .map(|v| u8::from(*v >= threshold))
        .collect();
    LabelMatrix::new(
        scores.sample_ids().to_vec(),
        scores.labels().to_vec(),
        values,
    )
}

/// Computes confusion counts and F1 per label plus the macro average.
/// `pred` and `truth` must already be aligned (same ids in the same order,
/// same label columns).
pub fn evaluate(pred: &LabelMatrix, truth: &LabelMatrix) -> Result<MetricReport> {
    if pred.sample_ids() != truth.sample_ids() {
        return Err(Error::Mismatch(
            "prediction and truth sample ids differ".into(),
        ));
    }
    if pred.labels() != truth.labels() {
        return Err(Error::Mismatch(
            "prediction and truth label columns differ".into(),
        ));
    }
    let n_labels = pred.n_labels();
    let mut counts = vec![ConfusionCounts::default(); n_labels];
    for r in 0..pred.n_rows() {
        let p = pred.row(r);
        let t = truth.row(r);
        for c in 0..n_labels {
            match (p[c], t[c]) {
                (1, 1) => counts[c].tp += 1,
                (1, 0) => counts[c].fp += 1,
                (0, 1) => counts[c].fn_ += 1,
                _ => counts[c].tn += 1,
            }
        }
    }
    let per_label_f1: Vec<f64> = counts.iter().map(f1_from_counts).collect();
    let macro_f1 = per_label_f1.iter().sum::<f64>() / n_labels as f64;
    Ok(MetricReport {
        per_label_f1,
        macro_f1,
        counts,
    })
}
