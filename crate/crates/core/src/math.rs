//! Numerical building blocks of the training objective.
//!
//! Everything here is a pure function over small dense vectors: temperature
//! softmax, cross-entropy, entropy, KL divergence, mean aggregation of
//! replica predictions, and the per-example objective with its gradient
//! with respect to each replica's logits.
//!
//! Cross-entropy and KL floor probabilities at [`PROB_FLOOR`] before the log,
//! and `0 * log 0` is treated as `0` everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp applied to probabilities before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on `sum(p) == 1` when validating a [`ProbDist`].
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Raw class scores produced by one model for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Logits(Vec<f64>);

impl Logits {
    /// Requires at least two entries, all finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "logits need at least 2 classes, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "logit {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Logits(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for Logits {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Logits::new(v)
    }
}

impl From<Logits> for Vec<f64> {
    fn from(l: Logits) -> Self {
        l.0
    }
}

/// A probability vector over `K` classes.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "Vec<f64>")]
pub struct ProbDist(Vec<f64>);

impl ProbDist {
    /// Validates entries in `[0, 1]` summing to one within [`PROB_SUM_TOL`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::invalid(format!(
                "distribution needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        if let Some(i) = probs
            .iter()
            .position(|p| !p.is_finite() || *p < 0.0 || *p > 1.0)
        {
            return Err(Error::invalid(format!(
                "probability {i} out of [0, 1] ({})",
                probs[i]
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(ProbDist(probs))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        ProbDist::new(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl From<ProbDist> for Vec<f64> {
    fn from(p: ProbDist) -> Self {
        p.0
    }
}

/// Softmax temperature. Values below one sharpen the distribution.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub const ONE: Temperature = Temperature(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::invalid(format!(
                "temperature must be a positive finite number, got {value}"
            )));
        }
        Ok(Temperature(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Temperature::new(v)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> Self {
        t.0
    }
}

/// Per-example loss decomposition for one replica.
///
/// `nie` is the negative entropy of the calibrated prediction, so it lies in
/// `[-ln K, 0]`. `total = ce + alpha * nie + beta * kl`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub ce: f64,
    pub nie: f64,
    pub kl: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn compose(ce: f64, nie: f64, kl: f64, alpha: f64, beta: f64) -> Self {
        LossTerms {
            ce,
            nie,
            kl,
            total: ce + alpha * nie + beta * kl,
        }
    }
}

/// Coefficients of the per-example objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub temperature: Temperature,
    /// Weight of the negative-entropy term.
    pub alpha: f64,
    /// Weight of the KL co-regularization term.
    pub beta: f64,
    /// When false the KL term is dropped entirely (warm-up).
    pub joint: bool,
}

/// Lowest index of the maximum entry. NaN entries are never selected.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

/// Sum that does not depend on the order of `values`.
pub(crate) fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn softmax_scaled(logits: &[f64], t: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| ((l - max) / t).exp()).collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}

/// `softmax(l / t)`, shifted by the maximum logit so no exponent overflows.
pub fn temp_softmax(logits: &Logits, t: Temperature) -> ProbDist {
    ProbDist(softmax_scaled(logits.as_slice(), t.value()))
}

/// `-ln p[y]` with `p[y]` floored at [`PROB_FLOOR`].
pub fn cross_entropy(p: &ProbDist, y: usize) -> Result<f64> {
    let py = *p
        .0
        .get(y)
        .ok_or_else(|| Error::invalid(format!("class {y} out of range for {} classes", p.len())))?;
    Ok(-py.max(PROB_FLOOR).ln())
}

fn entropy_raw(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&pk| pk > 0.0)
        .map(|&pk| pk * pk.ln())
        .sum::<f64>()
}

/// Shannon entropy in nats. The negative-entropy regularizer is `-entropy(p)`.
pub fn entropy(p: &ProbDist) -> f64 {
    // rounding can push a near point mass a hair below zero
    entropy_raw(&p.0).max(0.0)
}

fn kl_raw(target: &[f64], q: &[f64]) -> f64 {
    target
        .iter()
        .zip(q)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &qk)| t * (t.max(PROB_FLOOR).ln() - qk.max(PROB_FLOOR).ln()))
        .sum::<f64>()
}

/// `KL(target || q) = sum target_k ln(target_k / q_k)`.
pub fn kl_div(target: &ProbDist, q: &ProbDist) -> Result<f64> {
    if target.len() != q.len() {
        return Err(Error::invalid(format!(
            "KL between distributions of length {} and {}",
            target.len(),
            q.len()
        )));
    }
    Ok(kl_raw(&target.0, &q.0).max(0.0))
}

/// Elementwise mean of replica predictions.
///
/// Each coordinate is summed in sorted order, so the result is bit-identical
/// under any permutation of `preds`.
pub fn aggregate(preds: &[ProbDist]) -> Result<ProbDist> {
    let first = preds
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty set of predictions"))?;
    let k = first.len();
    if let Some(bad) = preds.iter().find(|p| p.len() != k) {
        return Err(Error::invalid(format!(
            "cannot aggregate distributions of length {k} and {}",
            bad.len()
        )));
    }
    let n = preds.len() as f64;
    let mut column = Vec::with_capacity(preds.len());
    let mean = (0..k)
        .map(|c| {
            column.clear();
            column.extend(preds.iter().map(|p| p.0[c]));
            order_free_sum(&mut column) / n
        })
        .collect();
    Ok(ProbDist(mean))
}

/// Losses and logit gradients for one example across all replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveOutput {
    pub terms: Vec<LossTerms>,
    /// `grads[i]` is the derivative of `terms[i].total` with respect to the
    /// raw logits of replica `i`.
    pub grads: Vec<Vec<f64>>,
    /// Calibrated prediction of each replica.
    pub probs: Vec<ProbDist>,
    /// Mean of `probs`; the KL target when `joint` is set.
    pub soft_label: ProbDist,
}

/// Per-replica objective `CE(p_i, y) + alpha * NIE(p_i) + beta * KL(p_st, p_i)`
/// and its gradient with respect to replica `i`'s logits.
///
/// `p_i = softmax(l_i / T)` and `p_st` is the mean of all `p_i`. The soft
/// label is a constant target: no gradient flows through it. With
/// `joint == false` the KL term is absent and `kl` is reported as zero.
pub fn objective_and_grad(
    logits: &[Logits],
    y: usize,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveOutput> {
    let first = logits
        .first()
        .ok_or_else(|| Error::invalid("objective needs at least one replica"))?;
    let k = first.len();
    if logits.iter().any(|l| l.len() != k) {
        return Err(Error::invalid("replica logits differ in length"));
    }
    if y >= k {
        return Err(Error::invalid(format!(
            "class {y} out of range for {k} classes"
        )));
    }
    if !(cfg.alpha.is_finite() && cfg.beta.is_finite()) {
        return Err(Error::invalid("objective coefficients must be finite"));
    }

    let t = cfg.temperature;
    let probs: Vec<ProbDist> = logits.iter().map(|l| temp_softmax(l, t)).collect();
    let soft_label = aggregate(&probs)?;
    let inv_t = 1.0 / t.value();

    let mut terms = Vec::with_capacity(probs.len());
    let mut grads = Vec::with_capacity(probs.len());
    for p in &probs {
        let ps = p.as_slice();
        let h = entropy_raw(ps);
        let ce = cross_entropy(p, y)?;
        let kl = if cfg.joint {
            kl_raw(soft_label.as_slice(), ps)
        } else {
            0.0
        };
        terms.push(LossTerms::compose(ce, -h, kl, cfg.alpha, cfg.beta));

        // d/dz of each term, z = l / T, where a floored log contributes
        // nothing:
        //   CE  -> p - onehot(y)
        //   NIE -> p_j (ln p_j + H)
        //   KL  -> p_j * sum_{k live} s_k - [j live] s_j
        let ce_live = ps[y] >= PROB_FLOOR;
        let st = soft_label.as_slice();
        let all_live = ps.iter().all(|&pk| pk >= PROB_FLOOR);
        let live_mass: f64 = st
            .iter()
            .zip(ps)
            .filter(|(_, &pk)| pk >= PROB_FLOOR)
            .map(|(sk, _)| sk)
            .sum();
        let grad = ps
            .iter()
            .enumerate()
            .map(|(j, &pj)| {
                let mut g = if ce_live {
                    pj - if j == y { 1.0 } else { 0.0 }
                } else {
                    0.0
                };
                if cfg.alpha != 0.0 && pj > 0.0 {
                    g += cfg.alpha * pj * (pj.ln() + h);
                }
                if cfg.joint && cfg.beta != 0.0 {
                    g += cfg.beta
                        * if all_live {
                            pj - st[j]
                        } else {
                            pj * live_mass - if pj >= PROB_FLOOR { st[j] } else { 0.0 }
                        };
                }
                g * inv_t
            })
            .collect();
        grads.push(grad);
    }
    Ok(ObjectiveOutput {
        terms,
        grads,
        probs,
        soft_label,
    })
}
