//! Confusion matrix and derived binary-classification metrics.
//!
//! The positive class is label `1` (tumor). Specificity is the true-negative
//! rate `TN / (TN + FP)`.

use std::fmt;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// The same matrix with the roles of the two classes exchanged.
    pub fn swapped(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        if p > 1 || l > 1 {
            return Err(Error::InvalidArgument(format!("non-binary value in pair ({p}, {l})")));
        }
        match (p == 1, l == 1) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// A ratio that may be undefined because its denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metric(Option<f64>);

impl Metric {
    pub const UNDEFINED: Metric = Metric(None);

    fn ratio(num: u64, den: u64) -> Metric {
        Metric((den > 0).then(|| num as f64 / den as f64))
    }

    pub fn value(self) -> Option<f64> {
        self.0
    }

    pub fn is_defined(self) -> bool {
        self.0.is_some()
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => match f.precision() {
                Some(p) => write!(f, "{v:.p$}"),
                None => write!(f, "{v:.6}"),
            },
            None => f.write_str("undef"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub accuracy: Metric,
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
    pub specificity: Metric,
    pub confusion: ConfusionMatrix,
}

pub const REPORT_CSV_HEADER: &str = "model,classifier,accuracy,precision,recall,f1,specificity";

pub fn report(cm: ConfusionMatrix) -> MetricReport {
    let precision = Metric::ratio(cm.tp, cm.tp + cm.fp);
    let recall = Metric::ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision.0, recall.0) {
        (Some(p), Some(r)) if p + r > 0.0 => Metric(Some(2.0 * p * r / (p + r))),
        _ => Metric::UNDEFINED,
    };
    MetricReport {
        accuracy: Metric::ratio(cm.tp + cm.tn, cm.total()),
        precision,
        recall,
        f1,
        specificity: Metric::ratio(cm.tn, cm.tn + cm.fp),
        confusion: cm,
    }
}

pub fn evaluate(predictions: &[u8], labels: &[u8]) -> Result<MetricReport> {
    confusion(predictions, labels).map(report)
}

impl MetricReport {
    /// One row of the report CSV.
    pub fn csv_row(&self, model: &str, classifier: &str) -> String {
        format!(
            "{model},{classifier},{},{},{},{},{}",
            self.accuracy, self.precision, self.recall, self.f1, self.specificity
        )
    }
}
