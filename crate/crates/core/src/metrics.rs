//! Classification metrics and wall-clock timing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Expands the matrix back into `(true, predicted)` label pairs, row-major.
    pub fn to_pairs(&self) -> (Vec<usize>, Vec<usize>) {
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for (t, row) in self.counts.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                for _ in 0..c {
                    truth.push(t);
                    pred.push(p);
                }
            }
        }
        (truth, pred)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
    pub fit_seconds: Option<f64>,
    pub predict_micros_per_sample: Option<f64>,
}

/// Accuracy and macro-averaged precision/recall/F1. A class with no
/// predictions (or no support) contributes 0, never NaN.
pub fn evaluate(
    truth: &[usize],
    predicted: &[usize],
    class_names: &[String],
) -> Result<EvalReport> {
    if truth.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let k = class_names.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= k || p >= k {
            return Err(Error::invalid(format!(
                "label pair ({t}, {p}) outside 0..{k}"
            )));
        }
        counts[t][p] += 1;
    }
    let confusion = ConfusionMatrix {
        class_names: class_names.to_vec(),
        counts,
    };
    Ok(report_from_confusion(confusion))
}

pub fn report_from_confusion(confusion: ConfusionMatrix) -> EvalReport {
    let k = confusion.class_names.len();
    let total = confusion.total() as f64;
    let c = &confusion.counts;
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let (mut precision, mut recall, mut f1) = (0.0, 0.0, 0.0);
    let mut correct = 0u64;
    for i in 0..k {
        let tp = c[i][i];
        correct += tp;
        let predicted: u64 = (0..k).map(|t| c[t][i]).sum();
        let support: u64 = c[i].iter().sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, support);
        precision += p;
        recall += r;
        f1 += if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
    }
    let kf = k as f64;
    EvalReport {
        accuracy: if total > 0.0 {
            correct as f64 / total
        } else {
            0.0
        },
        macro_precision: precision / kf,
        macro_recall: recall / kf,
        macro_f1: f1 / kf,
        confusion,
        fit_seconds: None,
        predict_micros_per_sample: None,
    }
}

/// Runs `f` once and returns its output with the elapsed wall time in
/// seconds (microsecond resolution).
pub fn time_fit<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    let micros = start.elapsed().as_micros();
    (out, micros as f64 * 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_predictions() {
        let t = [0, 1, 2, 1, 0];
        let r = evaluate(&t, &t, &names(3)).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(
            r.confusion.counts,
            vec![vec![2, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]
        );
    }

    #[test]
    fn constant_predictions_on_balanced_data() {
        let t = [0, 0, 1, 1, 2, 2];
        let r = evaluate(&t, &[0; 6], &names(3)).unwrap();
        assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.macro_recall - 1.0 / 3.0).abs() < 1e-15);
        // only class 0 was ever predicted: precision 1/3 there, 0 elsewhere
        assert!((r.macro_precision - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(evaluate(&[0, 1], &[0], &names(2)).is_err());
        assert!(evaluate(&[], &[], &names(2)).is_err());
        assert!(evaluate(&[0, 3], &[0, 1], &names(2)).is_err());
    }

    #[test]
    fn noop_timing_is_fast() {
        let ((), secs) = time_fit(|| ());
        assert!(secs < 1e-3);
    }

    #[test]
    fn confusion_pairs_round_trip() {
        let t = [0, 2, 1, 1, 0, 2, 2];
        let p = [0, 1, 1, 0, 0, 2, 2];
        let r = evaluate(&t, &p, &names(3)).unwrap();
        let (t2, p2) = r.confusion.to_pairs();
        assert_eq!(evaluate(&t2, &p2, &names(3)).unwrap(), r);
    }
}
