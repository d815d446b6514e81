//! Micro-averaged precision/recall/F1, accuracy, and entropy diagnostics.
//!
//! With a negative class set, that class earns no credit: a prediction of it
//! is never a true or false positive and a gold label of it is never a false
//! negative. Without one, micro-F1 over all classes equals accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{entropy, ProbDist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
    /// Mean entropy of the T=1 predictions, when probabilities were supplied.
    #[serde(
        rename = "mean_entropy_T1",
        skip_serializing_if = "Option::is_none",
        default
    )]
    pub mean_entropy_t1: Option<f64>,
    pub per_class: Vec<ClassCounts>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Micro-averaged scores of `preds` against `golds` over `num_classes` labels.
pub fn micro_f1(
    preds: &[usize],
    golds: &[usize],
    num_classes: usize,
    negative_class: Option<usize>,
) -> Result<EvalReport> {
    if preds.len() != golds.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    if let Some(bad) = preds
        .iter()
        .chain(golds)
        .chain(negative_class.iter())
        .find(|&&c| c >= num_classes)
    {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }

    let mut per_class = vec![ClassCounts::default(); num_classes];
    let mut correct = 0u64;
    for (&p, &g) in preds.iter().zip(golds) {
        if p == g {
            correct += 1;
            if Some(g) != negative_class {
                per_class[g].tp += 1;
            }
        } else {
            if Some(p) != negative_class {
                per_class[p].fp += 1;
            }
            if Some(g) != negative_class {
                per_class[g].fn_ += 1;
            }
        }
    }
    let (tp, fp, fn_) = per_class
        .iter()
        .fold((0, 0, 0), |(a, b, c), k| (a + k.tp, b + k.fp, c + k.fn_));
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EvalReport {
        micro_precision: precision,
        micro_recall: recall,
        micro_f1: f1,
        accuracy: ratio(correct, preds.len() as u64),
        mean_entropy_t1: None,
        per_class,
    })
}

/// Average entropy of a non-empty set of distributions over the same classes.
pub fn mean_entropy(dists: &[ProbDist]) -> Result<f64> {
    let first = dists
        .first()
        .ok_or_else(|| Error::invalid("mean entropy of an empty set"))?;
    if dists.iter().any(|d| d.len() != first.len()) {
        return Err(Error::invalid("distributions differ in class count"));
    }
    let mut hs: Vec<f64> = dists.iter().map(entropy).collect();
    Ok(crate::math::order_free_sum(&mut hs) / dists.len() as f64)
}
