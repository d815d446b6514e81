//! Prediction-time combination of replicas.
//!
//! The soft vote sums each replica's L2-normalized raw logits and takes the
//! argmax. Normalizing removes each replica's overall scale, so only the
//! direction of its logit vector counts: a replica that is unsure (nearly
//! flat logits) contributes almost nothing to the margin between classes,
//! while a confident one dominates.

use crate::error::{Error, Result};
use crate::math::{argmax, order_free_sum, Logits};

#[derive(Debug, Clone, PartialEq)]
pub struct VoteResult {
    pub predicted: usize,
    /// Sum of the normalized replica logits.
    pub combined: Vec<f64>,
    pub normalized: Vec<Vec<f64>>,
}

/// Unit-L2 copy of `l`, or all zeros when `l` is the zero vector.
pub fn normalize(l: &[f64]) -> Vec<f64> {
    let mut squares: Vec<f64> = l.iter().map(|v| v * v).collect();
    let norm = order_free_sum(&mut squares).sqrt();
    if norm == 0.0 {
        return vec![0.0; l.len()];
    }
    l.iter().map(|v| v / norm).collect()
}

/// Confidence-weighted vote over replicas; ties go to the lowest class.
///
/// Sums are taken in sorted order per class, so the result does not depend
/// on the order of `logits` or on how the class axis is permuted.
pub fn soft_vote(logits: &[Logits]) -> Result<VoteResult> {
    let first = logits
        .first()
        .ok_or_else(|| Error::invalid("soft vote needs at least one replica"))?;
    let k = first.len();
    if let Some(bad) = logits.iter().find(|l| l.len() != k) {
        return Err(Error::invalid(format!(
            "replica logits have lengths {k} and {}",
            bad.len()
        )));
    }
    let normalized: Vec<Vec<f64>> = logits.iter().map(|l| normalize(l.as_slice())).collect();
    let mut column = Vec::with_capacity(normalized.len());
    let combined: Vec<f64> = (0..k)
        .map(|c| {
            column.clear();
            column.extend(normalized.iter().map(|v| v[c]));
            order_free_sum(&mut column)
        })
        .collect();
    Ok(VoteResult {
        predicted: argmax(&combined),
        combined,
        normalized,
    })
}

/// Argmax of one replica's logits, lowest index on ties.
pub fn predict_single(l: &Logits) -> usize {
    argmax(l.as_slice())
}
