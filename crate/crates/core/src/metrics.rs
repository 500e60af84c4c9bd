//! Confusion-matrix scores and misclassification cost.
//!
//! The positive class is churn (label 1). A rate whose denominator is zero
//! evaluates to 0 and is marked undefined, so degenerate folds still produce
//! a report.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("unit costs must be finite and non-negative")]
    InvalidCost,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same counts with class 0 treated as positive.
    pub fn mirrored(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }

    /// Rows labelled positive.
    pub fn positive_support(&self) -> u64 {
        self.tp + self.fn_
    }
}

pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionMatrix, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (1, 1) => cm.tp += 1,
            (1, 0) => cm.fp += 1,
            (0, 1) => cm.fn_ += 1,
            (0, 0) => cm.tn += 1,
            (1, bad) | (0, bad) => return Err(MetricsError::InvalidLabel(bad)),
            (bad, _) => return Err(MetricsError::InvalidLabel(bad)),
        }
    }
    Ok(cm)
}

/// A ratio in `[0, 1]`; `defined` is false when the denominator was zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub defined: bool,
}

impl Rate {
    fn ratio(num: f64, den: f64) -> Rate {
        if den == 0.0 {
            Rate {
                value: 0.0,
                defined: false,
            }
        } else {
            Rate {
                value: num / den,
                defined: true,
            }
        }
    }
}

pub fn precision(cm: &ConfusionMatrix) -> Rate {
    Rate::ratio(cm.tp as f64, (cm.tp + cm.fp) as f64)
}

pub fn recall(cm: &ConfusionMatrix) -> Rate {
    Rate::ratio(cm.tp as f64, (cm.tp + cm.fn_) as f64)
}

/// Harmonic mean of precision and recall, `2TP / (2TP + FP + FN)`.
pub fn f1(cm: &ConfusionMatrix) -> Rate {
    let p = precision(cm);
    let r = recall(cm);
    let mut out = Rate::ratio(2.0 * p.value * r.value, p.value + r.value);
    out.defined &= p.defined && r.defined;
    out
}

pub fn accuracy(cm: &ConfusionMatrix) -> Rate {
    Rate::ratio((cm.tp + cm.tn) as f64, cm.total() as f64)
}

/// Support-weighted mean of the churn-class and retained-class F1.
pub fn weighted_f1(cm: &ConfusionMatrix) -> Rate {
    weighted(cm, f1)
}

fn weighted(cm: &ConfusionMatrix, score: fn(&ConfusionMatrix) -> Rate) -> Rate {
    let pos = cm.positive_support() as f64;
    let neg = (cm.tn + cm.fp) as f64;
    let total = pos + neg;
    if total == 0.0 {
        return Rate {
            value: 0.0,
            defined: false,
        };
    }
    let (a, b) = (score(cm), score(&cm.mirrored()));
    // A class with no support contributes nothing, so its undefined score does not matter.
    let defined = (pos == 0.0 || a.defined) && (neg == 0.0 || b.defined);
    Rate {
        value: (pos * a.value + neg * b.value) / total,
        defined,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Cost of contacting a customer who would have stayed.
    pub c_fp: f64,
    /// Revenue lost to an undetected churner.
    pub c_fn: f64,
}

impl CostModel {
    pub fn new(c_fp: f64, c_fn: f64) -> Result<CostModel, MetricsError> {
        if !(c_fp.is_finite() && c_fn.is_finite() && c_fp >= 0.0 && c_fn >= 0.0) {
            return Err(MetricsError::InvalidCost);
        }
        Ok(CostModel { c_fp, c_fn })
    }
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            c_fp: 1.0,
            c_fn: 1.0,
        }
    }
}

/// `c_fp · FP + c_fn · FN`.
pub fn total_cost(cm: &ConfusionMatrix, costs: &CostModel) -> f64 {
    costs.c_fp * cm.fp as f64 + costs.c_fn * cm.fn_ as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub samples: u64,
    pub accuracy: f64,
    pub churn: ClassScores,
    pub retained: ClassScores,
    pub weighted: Averages,
    pub total_cost: f64,
    pub costs: CostModel,
    pub confusion: ConfusionMatrix,
    /// Names of rates whose denominator was zero.
    pub undefined: Vec<String>,
}

impl MetricReport {
    pub fn new(cm: ConfusionMatrix, costs: CostModel) -> MetricReport {
        let mut undefined = Vec::new();
        let mut take = |name: &str, r: Rate| {
            if !r.defined {
                undefined.push(name.to_string());
            }
            r.value
        };
        let mirrored = cm.mirrored();
        let churn = ClassScores {
            precision: take("churn.precision", precision(&cm)),
            recall: take("churn.recall", recall(&cm)),
            f1: take("churn.f1", f1(&cm)),
            support: cm.positive_support(),
        };
        let retained = ClassScores {
            precision: take("retained.precision", precision(&mirrored)),
            recall: take("retained.recall", recall(&mirrored)),
            f1: take("retained.f1", f1(&mirrored)),
            support: mirrored.positive_support(),
        };
        let weighted = Averages {
            precision: take("weighted.precision", weighted(&cm, precision)),
            recall: take("weighted.recall", weighted(&cm, recall)),
            f1: take("weighted.f1", weighted_f1(&cm)),
        };
        let accuracy = take("accuracy", accuracy(&cm));
        MetricReport {
            samples: cm.total(),
            accuracy,
            churn,
            retained,
            weighted,
            total_cost: total_cost(&cm, &costs),
            costs,
            confusion: cm,
            undefined,
        }
    }

    pub fn evaluate(
        predictions: &[u8],
        labels: &[u8],
        costs: CostModel,
    ) -> Result<MetricReport, MetricsError> {
        Ok(MetricReport::new(confusion(predictions, labels)?, costs))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>9} {:>9} {:>9} {:>8}",
            "class", "precision", "recall", "f1", "support"
        )?;
        for (name, s) in [("churn", &self.churn), ("retained", &self.retained)] {
            writeln!(
                f,
                "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                name, s.precision, s.recall, s.f1, s.support
            )?;
        }
        writeln!(
            f,
            "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            "weighted",
            self.weighted.precision,
            self.weighted.recall,
            self.weighted.f1,
            self.samples
        )?;
        writeln!(f)?;
        writeln!(f, "accuracy   {:.4}", self.accuracy)?;
        let cm = &self.confusion;
        writeln!(
            f,
            "confusion  tp={} fp={} fn={} tn={}",
            cm.tp, cm.fp, cm.fn_, cm.tn
        )?;
        write!(
            f,
            "cost       {} (c_fp={}, c_fn={})",
            self.total_cost, self.costs.c_fp, self.costs.c_fn
        )?;
        if !self.undefined.is_empty() {
            write!(f, "\nundefined  {}", self.undefined.join(", "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CM: ConfusionMatrix = ConfusionMatrix {
        tp: 5,
        fp: 1,
        fn_: 2,
        tn: 12,
    };

    #[test]
    fn rates_by_hand() {
        assert!((precision(&CM).value - 5.0 / 6.0).abs() < 1e-15);
        assert!((recall(&CM).value - 5.0 / 7.0).abs() < 1e-15);
        assert!((f1(&CM).value - 10.0 / 13.0).abs() < 1e-15);
        assert_eq!(accuracy(&CM).value, 0.85);
        assert!((precision(&CM).value - 0.8333).abs() < 5e-5);
        assert!((recall(&CM).value - 0.7143).abs() < 5e-5);
        assert!((f1(&CM).value - 0.7692).abs() < 5e-5);
    }

    #[test]
    fn weighted_f1_by_hand() {
        // churn F1 = 10/13 (support 7), retained F1 = 24/27 (support 13)
        let expected = (7.0 * 10.0 / 13.0 + 13.0 * 24.0 / 27.0) / 20.0;
        assert!((weighted_f1(&CM).value - expected).abs() < 1e-15);
        assert!((weighted_f1(&CM).value - 0.847_008_547).abs() < 1e-9);
    }

    #[test]
    fn weighted_equals_macro_for_balanced_symmetric_errors() {
        let cm = ConfusionMatrix {
            tp: 8,
            fp: 2,
            fn_: 2,
            tn: 8,
        };
        let macro_f1 = (f1(&cm).value + f1(&cm.mirrored()).value) / 2.0;
        assert!((weighted_f1(&cm).value - macro_f1).abs() < 1e-15);
    }

    #[test]
    fn single_class_all_correct() {
        let cm = confusion(&[0, 0, 0], &[0, 0, 0]).unwrap();
        let w = weighted_f1(&cm);
        assert_eq!(w.value, 1.0);
        assert!(w.defined);
        let report = MetricReport::new(cm, CostModel::default());
        assert!(report.undefined.contains(&"churn.precision".to_string()));
    }

    #[test]
    fn perfect_and_inverted_predictions() {
        let labels = [0, 1, 1, 0, 1];
        let cm = confusion(&labels, &labels).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        for r in [precision(&cm), recall(&cm), f1(&cm), accuracy(&cm)] {
            assert_eq!(r.value, 1.0);
        }
        let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
        let cm = confusion(&flipped, &labels).unwrap();
        assert_eq!((cm.tp, cm.tn), (0, 0));
    }

    #[test]
    fn zero_denominator_is_flagged() {
        let cm = ConfusionMatrix {
            tp: 0,
            fp: 0,
            fn_: 3,
            tn: 4,
        };
        let p = precision(&cm);
        assert_eq!(
            p,
            Rate {
                value: 0.0,
                defined: false
            }
        );
        assert!(!f1(&cm).defined);
    }

    #[test]
    fn confusion_errors() {
        assert_eq!(
            confusion(&[1], &[1, 0]),
            Err(MetricsError::LengthMismatch {
                predictions: 1,
                labels: 2
            })
        );
        assert_eq!(confusion(&[], &[]), Err(MetricsError::Empty));
        assert_eq!(confusion(&[2], &[0]), Err(MetricsError::InvalidLabel(2)));
    }

    #[test]
    fn cost_examples() {
        let cm = ConfusionMatrix {
            tp: 4,
            fp: 3,
            fn_: 2,
            tn: 9,
        };
        assert_eq!(
            total_cost(
                &cm,
                &CostModel {
                    c_fp: 10.0,
                    c_fn: 100.0
                }
            ),
            230.0
        );
        assert_eq!(
            total_cost(
                &cm,
                &CostModel {
                    c_fp: 20.0,
                    c_fn: 200.0
                }
            ),
            460.0
        );
        let perfect = ConfusionMatrix {
            tp: 4,
            fp: 0,
            fn_: 0,
            tn: 9,
        };
        assert_eq!(
            total_cost(
                &perfect,
                &CostModel {
                    c_fp: 7.0,
                    c_fn: 1e6
                }
            ),
            0.0
        );
        assert_eq!(
            total_cost(
                &cm,
                &CostModel {
                    c_fp: 0.0,
                    c_fn: 5.0
                }
            ),
            10.0
        );
        assert!(CostModel::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn report_text_and_json() {
        let report = MetricReport::new(
            CM,
            CostModel {
                c_fp: 10.0,
                c_fn: 100.0,
            },
        );
        assert_eq!(report.total_cost, 210.0);
        let text = report.to_string();
        assert!(text.contains("weighted"));
        assert!(text.contains("tp=5 fp=1 fn=2 tn=12"));
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["confusion"]["fn"], 2);
        assert_eq!(json["churn"]["support"], 7);
    }
}
