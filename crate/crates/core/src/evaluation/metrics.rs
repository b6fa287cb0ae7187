use serde::{Deserialize, Serialize};

use crate::dataset::LabelVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub labels: Vec<LabelCounts>,
}

fn check_shapes(pred: &[LabelVector], truth: &[LabelVector]) -> Result<usize> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    let width = truth.first().map_or(0, LabelVector::len);
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != width || t.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                found: if t.len() != width { t.len() } else { p.len() },
            });
        }
    }
    Ok(width)
}

pub fn confusion(pred: &[LabelVector], truth: &[LabelVector]) -> Result<ConfusionCounts> {
    let width = check_shapes(pred, truth)?;
    let mut labels = vec![LabelCounts::default(); width];
    for (p, t) in pred.iter().zip(truth) {
        for (c, (&pb, &tb)) in labels.iter_mut().zip(p.bits().iter().zip(t.bits())) {
            match (pb, tb) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
    }
    Ok(ConfusionCounts { labels })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn accuracy(c: &LabelCounts) -> f64 {
    ratio(c.tp + c.tn, c.total())
}

pub fn precision(c: &LabelCounts) -> f64 {
    ratio(c.tp, c.tp + c.fp)
}

pub fn recall(c: &LabelCounts) -> f64 {
    ratio(c.tp, c.tp + c.fn_)
}

pub fn f1(c: &LabelCounts) -> f64 {
    let (p, r) = (precision(c), recall(c));
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn macro_average(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Fraction of rows predicted exactly.
pub fn total_accuracy(pred: &[LabelVector], truth: &[LabelVector]) -> Result<f64> {
    check_shapes(pred, truth)?;
    Ok(ratio(
        pred.iter().zip(truth).filter(|(p, t)| p == t).count(),
        truth.len(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<&LabelCounts> for LabelMetrics {
    fn from(c: &LabelCounts) -> Self {
        LabelMetrics {
            accuracy: accuracy(c),
            precision: precision(c),
            recall: recall(c),
            f1: f1(c),
        }
    }
}

/// Per-label and macro-averaged metrics plus total accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub counts: ConfusionCounts,
    pub per_label: Vec<LabelMetrics>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub total_accuracy: f64,
}

pub fn summarize(pred: &[LabelVector], truth: &[LabelVector]) -> Result<Summary> {
    let counts = confusion(pred, truth)?;
    let per_label: Vec<LabelMetrics> = counts.labels.iter().map(LabelMetrics::from).collect();
    let avg = |f: fn(&LabelMetrics) -> f64| macro_average(&per_label.iter().map(f).collect::<Vec<_>>());
    Ok(Summary {
        accuracy: avg(|m| m.accuracy),
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
        total_accuracy: total_accuracy(pred, truth)?,
        per_label,
        counts,
    })
}
