//! Evaluation metrics on the original target scale.

use serde::Serialize;

use crate::loss::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub mse: f64,
}

pub fn regression_metrics(pred: &[f64], y: &[f64]) -> RegressionMetrics {
    let n = y.len().max(1) as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(y) {
        abs += (p - t).abs();
        sq += (p - t) * (p - t);
    }
    RegressionMetrics {
        mae: abs / n,
        mse: sq / n,
    }
}

/// Class decisions from raw outputs: the sign for a single logistic output,
/// the argmax otherwise (ties to the lowest class).
pub fn predict_labels(outputs: &[f64], m: usize, loss: LossKind) -> Vec<usize> {
    outputs
        .chunks(m)
        .map(|o| {
            if m == 1 && loss == LossKind::Logistic {
                usize::from(o[0] >= 0.0)
            } else {
                let mut best = 0;
                for (j, v) in o.iter().enumerate() {
                    if *v > o[best] {
                        best = j;
                    }
                }
                best
            }
        })
        .collect()
}

/// Percentage of mismatched labels.
pub fn misclassification_rate(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let wrong = pred.iter().zip(labels).filter(|(a, b)| a != b).count();
    100.0 * wrong as f64 / labels.len() as f64
}
