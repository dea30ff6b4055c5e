//! Per-class and overall evaluation metrics.
//!
//! Each class is scored one-vs-rest over label sets: accuracy, F1,
//! TP-rate (recall), TN-rate (specificity), and their complements. Overall
//! accuracy is the exact-match fraction: argmax agreement for single-label
//! runs, full label-set equality for multi-label runs. Empty denominators
//! resolve to a perfect rate so the TP+FN and TN+FP identities always hold.

use crate::error::{Error, Result};
use crate::label::{Label, LabelSet};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    /// Segments whose target contains this class.
    pub n: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub tp_rate: f64,
    pub tn_rate: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: Vec<(Label, ClassMetrics)>,
    pub overall_accuracy: f64,
    pub total: usize,
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores predictions against targets (equal-length label-set lists).
pub fn evaluate(predictions: &[LabelSet], targets: &[LabelSet]) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate zero segments".into()));
    }
    if predictions.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let total = predictions.len();
    let exact = predictions
        .iter()
        .zip(targets)
        .filter(|(p, t)| p == t)
        .count();

    let mut per_class = Vec::with_capacity(4);
    for class in Label::ALL {
        let mut tp = 0usize;
        let mut tn = 0usize;
        let mut fp = 0usize;
        let mut fnn = 0usize;
        for (p, t) in predictions.iter().zip(targets) {
            match (p.contains(&class), t.contains(&class)) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fnn += 1,
            }
        }
        let recall = rate(tp, tp + fnn);
        let specificity = rate(tn, tn + fp);
        let precision = rate(tp, tp + fp);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push((
            class,
            ClassMetrics {
                n: tp + fnn,
                accuracy: 100.0 * (tp + tn) as f64 / total as f64,
                f1: 100.0 * f1,
                tp_rate: 100.0 * recall,
                tn_rate: 100.0 * specificity,
                fp_rate: 100.0 * (1.0 - specificity),
                fn_rate: 100.0 * (1.0 - recall),
            },
        ));
    }
    Ok(MetricsReport {
        per_class,
        overall_accuracy: 100.0 * exact as f64 / total as f64,
        total,
    })
}

impl MetricsReport {
    /// Markdown table with the Acc/F1/TP/TN/FP/FN column layout.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("| Class | N | Acc. | F1 | TP | TN | FP | FN |\n");
        s.push_str("|---|---|---|---|---|---|---|---|\n");
        for class in [Label::Abd, Label::Do, Label::Void, Label::None] {
            let (_, m) = self
                .per_class
                .iter()
                .find(|(c, _)| *c == class)
                .expect("all classes scored");
            s.push_str(&format!(
                "| {} | {} | {:.1} | {:.1} | {:.1} | {:.1} | {:.1} | {:.1} |\n",
                class, m.n, m.accuracy, m.f1, m.tp_rate, m.tn_rate, m.fp_rate, m.fn_rate
            ));
        }
        s.push_str(&format!(
            "| **Overall** | **{}** | **{:.2}** | - | - | - | - | - |\n",
            self.total, self.overall_accuracy
        ));
        s
    }

    /// Machine-readable CSV mirroring the markdown table.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,n,accuracy,f1,tp_rate,tn_rate,fp_rate,fn_rate\n");
        for (class, m) in &self.per_class {
            s.push_str(&format!(
                "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
                class, m.n, m.accuracy, m.f1, m.tp_rate, m.tn_rate, m.fp_rate, m.fn_rate
            ));
        }
        s.push_str(&format!(
            "OVERALL,{},{:.4},,,,,\n",
            self.total, self.overall_accuracy
        ));
        s
    }
}
