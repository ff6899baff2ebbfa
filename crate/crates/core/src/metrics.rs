//! Confusion matrices and the evaluation suite: accuracy plus precision,
//! recall and F1 in two flavors.
//!
//! The positive-class flavor scores the relevant class only. The micro flavor
//! pools true positives, false positives and false negatives over both
//! classes; for single-label binary evaluation every micro metric equals
//! accuracy, which is why the two are reported side by side.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction and gold keys differ: {0:?}")]
    Alignment(Vec<String>),
    #[error("cannot report on an empty confusion matrix")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same evaluation with the negative class treated as positive.
    pub fn swapped(&self) -> Self {
        Self::new(self.tn, self.fn_, self.fp, self.tp)
    }

    pub fn from_labels(pred: &[Label], gold: &[Label]) -> Self {
        let mut m = Self::default();
        for (p, g) in pred.iter().zip(gold) {
            match (p, g) {
                (Label::Relevant, Label::Relevant) => m.tp += 1,
                (Label::Relevant, Label::Irrelevant) => m.fp += 1,
                (Label::Irrelevant, Label::Relevant) => m.fn_ += 1,
                (Label::Irrelevant, Label::Irrelevant) => m.tn += 1,
            }
        }
        m
    }
}

/// Builds the matrix over posts keyed by id; both maps must cover the same ids.
pub fn confusion(
    pred: &HashMap<String, Label>,
    gold: &HashMap<String, Label>,
) -> Result<ConfusionMatrix, MetricsError> {
    let mut diff: Vec<String> = pred
        .keys()
        .filter(|k| !gold.contains_key(*k))
        .chain(gold.keys().filter(|k| !pred.contains_key(*k)))
        .cloned()
        .collect();
    if !diff.is_empty() {
        diff.sort();
        return Err(MetricsError::Alignment(diff));
    }
    let mut m = ConfusionMatrix::default();
    for (id, g) in gold {
        match (pred[id], *g) {
            (Label::Relevant, Label::Relevant) => m.tp += 1,
            (Label::Relevant, Label::Irrelevant) => m.fp += 1,
            (Label::Irrelevant, Label::Relevant) => m.fn_ += 1,
            (Label::Irrelevant, Label::Irrelevant) => m.tn += 1,
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision == recall {
        // exact: 2p²/2p can be off by an ulp in floating point
        precision
    } else if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

impl Prf {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Self {
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }
}

pub const FLAVOR_NOTE: &str = "positive_class scores the relevant class; micro pools both classes \
and therefore equals accuracy for single-label binary evaluation";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub positive_class: Prf,
    pub micro: Prf,
    pub accuracy: f64,
    pub matrix: ConfusionMatrix,
    pub evaluated_posts: usize,
}

pub fn report(matrix: ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    let total = matrix.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let ConfusionMatrix { tp, fp, fn_, tn } = matrix;
    // Per-class counts pooled over both classes: the negative class's TP is
    // tn, its FP is fn and its FN is fp.
    let micro = Prf::from_counts(tp + tn, fp + fn_, fn_ + fp);
    Ok(MetricsReport {
        positive_class: Prf::from_counts(tp, fp, fn_),
        micro,
        accuracy: ratio(tp + tn, total),
        matrix,
        evaluated_posts: total,
    })
}

impl MetricsReport {
    /// Plain-text table in the layout of a runs-by-metrics results table.
    pub fn render(&self, name: &str) -> String {
        render_table(&[(name.to_string(), Some(self))])
    }
}

/// Renders rows of `(run name, report)`; `None` rows are marked incomplete.
/// Precision, recall and F1 are the positive-class flavor.
pub fn render_table(rows: &[(String, Option<&MetricsReport>)]) -> String {
    let name_w = rows
        .iter()
        .map(|(n, _)| n.chars().count())
        .chain(std::iter::once(4))
        .max()
        .unwrap_or(4);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "| {:<name_w$} | {:>9} | {:>6} | {:>8} | {:>8} |",
        "Runs", "Precision", "Recall", "F1-Score", "Accuracy"
    );
    let _ = writeln!(
        out,
        "|{}|{}|{}|{}|{}|",
        "-".repeat(name_w + 2),
        "-".repeat(11),
        "-".repeat(8),
        "-".repeat(10),
        "-".repeat(10)
    );
    for (name, rep) in rows {
        match rep {
            Some(r) => {
                let _ = writeln!(
                    out,
                    "| {:<name_w$} | {:>9.3} | {:>6.3} | {:>8.3} | {:>8.3} |",
                    name,
                    r.positive_class.precision,
                    r.positive_class.recall,
                    r.positive_class.f1,
                    r.accuracy
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "| {:<name_w$} | {:>9} | {:>6} | {:>8} | {:>8} |",
                    name, "incomplete", "", "", ""
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn keyed(labels: &[u8]) -> HashMap<String, Label> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| (format!("p{i}"), Label::from_u8(l).unwrap()))
            .collect()
    }

    #[test]
    fn confusion_examples() {
        let gold = keyed(&[1, 1, 0, 0]);
        assert_eq!(confusion(&gold, &gold).unwrap(), ConfusionMatrix::new(2, 0, 0, 2));

        let gold = keyed(&[1, 0]);
        let pred = keyed(&[1, 1]);
        assert_eq!(confusion(&pred, &gold).unwrap(), ConfusionMatrix::new(1, 1, 0, 0));

        let gold = keyed(&[1, 1, 0, 0]);
        let pred = keyed(&[1, 0, 0, 1]);
        assert_eq!(confusion(&pred, &gold).unwrap(), ConfusionMatrix::new(1, 1, 1, 1));
    }

    #[test]
    fn confusion_key_mismatch() {
        let gold = keyed(&[1, 0, 1]);
        let pred = keyed(&[1, 0]);
        assert_eq!(
            confusion(&pred, &gold).unwrap_err(),
            MetricsError::Alignment(vec!["p2".into()])
        );
    }

    #[test]
    fn f1_from_published_precision_recall() {
        assert!((f1_score(0.732, 0.866) - 0.794).abs() <= 0.001);
    }

    #[test]
    fn report_examples() {
        let r = report(ConfusionMatrix::new(1, 1, 1, 1)).unwrap();
        assert_eq!(r.positive_class, Prf { precision: 0.5, recall: 0.5, f1: 0.5 });
        assert_eq!(r.accuracy, 0.5);

        let r = report(ConfusionMatrix::new(2, 0, 0, 2)).unwrap();
        for v in [r.positive_class.precision, r.positive_class.recall, r.positive_class.f1, r.micro.f1, r.accuracy] {
            assert_eq!(v, 1.0);
        }
        assert_eq!(report(ConfusionMatrix::default()), Err(MetricsError::Empty));
    }

    #[test]
    fn zero_denominators_are_zero() {
        let r = report(ConfusionMatrix::new(0, 0, 0, 5)).unwrap();
        assert_eq!(r.positive_class, Prf { precision: 0.0, recall: 0.0, f1: 0.0 });
        assert_eq!(r.accuracy, 1.0);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"fn\":0"));
    }

    #[test]
    fn table_marks_incomplete_rows() {
        let r = report(ConfusionMatrix::new(1, 1, 1, 1)).unwrap();
        let t = render_table(&[("Run 1".into(), Some(&r)), ("Run 2".into(), None)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("Precision") && lines[0].contains("F1-Score") && lines[0].contains("Accuracy"));
        assert!(lines[2].contains("0.500"));
        assert!(lines[3].contains("incomplete"));
    }

    proptest! {
        #[test]
        fn micro_equals_accuracy(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..200)) {
            let pred: Vec<Label> = pairs.iter().map(|p| Label::from_u8(p.0).unwrap()).collect();
            let gold: Vec<Label> = pairs.iter().map(|p| Label::from_u8(p.1).unwrap()).collect();
            let r = report(ConfusionMatrix::from_labels(&pred, &gold)).unwrap();
            prop_assert_eq!(r.micro.precision, r.accuracy);
            prop_assert_eq!(r.micro.recall, r.accuracy);
            prop_assert_eq!(r.micro.f1, r.accuracy);
        }

        #[test]
        fn swapping_positive_class(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..50) {
            let m = ConfusionMatrix::new(tp, fp, fn_, tn);
            prop_assume!(m.total() > 0);
            let a = report(m).unwrap();
            let b = report(m.swapped()).unwrap();
            // precision of the swapped view is the negative predictive value
            prop_assert_eq!(b.positive_class.precision, ratio(tn, tn + fn_));
            prop_assert_eq!(b.positive_class.recall, ratio(tn, tn + fp));
            prop_assert_eq!(a.accuracy, b.accuracy);
            prop_assert_eq!(m.swapped().swapped(), m);
            for v in [a.positive_class.precision, a.positive_class.recall, a.positive_class.f1, a.accuracy] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
