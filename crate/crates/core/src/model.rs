//! Small differentiable classifiers and their Adam optimizer.
//!
//! Parameters live in one flat vector. Layouts (row-major matrices):
//!
//! ```text
//! linear: W [K x D] | b [K]
//! mlp:    W1 [H x D] | b1 [H] | W2 [K x H] | b2 [K]
//! ```
//!
//! `forward` yields `W x + b` (linear) or `W2 tanh(W1 x + b1) + b2` (mlp).
//! `backward` returns the gradient of `<g, forward(x)>` for an upstream logit
//! gradient `g`, so chaining a loss gradient through it is a single call.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Logits;
use crate::rng;

pub const DEFAULT_INPUT_DIM: usize = 20;
pub const DEFAULT_HIDDEN_WIDTH: usize = 32;
pub const DEFAULT_NUM_CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Ignored (and stored as 0) for linear models.
    pub hidden_width: usize,
}

impl Shape {
    pub fn new(
        kind: ModelKind,
        input_dim: usize,
        num_classes: usize,
        hidden_width: usize,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input dimension must be at least 1"));
        }
        if num_classes < 2 {
            return Err(Error::invalid("a classifier needs at least 2 classes"));
        }
        let hidden_width = match kind {
            ModelKind::Linear => 0,
            ModelKind::Mlp if hidden_width == 0 => {
                return Err(Error::invalid("mlp hidden width must be at least 1"))
            }
            ModelKind::Mlp => hidden_width,
        };
        Ok(Shape {
            kind,
            input_dim,
            num_classes,
            hidden_width,
        })
    }

    pub fn param_count(&self) -> usize {
        let (d, h, k) = (self.input_dim, self.hidden_width, self.num_classes);
        match self.kind {
            ModelKind::Linear => k * d + k,
            ModelKind::Mlp => h * d + h + k * h + k,
        }
    }

    /// `(fan_in, fan_out, weight range)` per weight matrix, in layout order.
    fn weight_blocks(&self) -> Vec<(usize, usize, usize)> {
        let (d, h, k) = (self.input_dim, self.hidden_width, self.num_classes);
        match self.kind {
            ModelKind::Linear => vec![(d, k, 0)],
            ModelKind::Mlp => vec![(d, h, 0), (h, k, h * d + h)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub shape: Shape,
    pub init_seed: u64,
    pub params: Vec<f64>,
}

impl ModelParams {
    /// Glorot-uniform weights from `seed`, zero biases.
    pub fn init(shape: Shape, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut params = vec![0.0; shape.param_count()];
        for (fan_in, fan_out, start) in shape.weight_blocks() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut params[start..start + fan_in * fan_out] {
                *w = (2.0 * rng::unit(&mut rng) - 1.0) * limit;
            }
        }
        ModelParams {
            shape,
            init_seed: seed,
            params,
        }
    }

    /// Wraps an explicit parameter vector, checking its length and finiteness.
    pub fn from_params(shape: Shape, init_seed: u64, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                shape.param_count(),
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::Numeric {
                index: i,
                message: "parameter is not finite".into(),
            });
        }
        Ok(ModelParams {
            shape,
            init_seed,
            params,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shape.input_dim {
            return Err(Error::invalid(format!(
                "feature vector has {} entries, model expects {}",
                x.len(),
                self.shape.input_dim
            )));
        }
        Ok(())
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let (d, h) = (self.shape.input_dim, self.shape.hidden_width);
        let (w1, rest) = self.params.split_at(h * d);
        let b1 = &rest[..h];
        w1.chunks_exact(d)
            .zip(b1)
            .map(|(row, b)| (dot(row, x) + b).tanh())
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Logits> {
        self.check_input(x)?;
        let Shape {
            kind,
            input_dim: d,
            num_classes: k,
            hidden_width: h,
        } = self.shape;
        let out = match kind {
            ModelKind::Linear => affine(&self.params[..k * d], &self.params[k * d..], x),
            ModelKind::Mlp => {
                let a = self.hidden(x);
                let off = h * d + h;
                affine(
                    &self.params[off..off + k * h],
                    &self.params[off + k * h..],
                    &a,
                )
            }
        };
        Logits::new(out).map_err(|e| Error::Numeric {
            index: 0,
            message: format!("forward pass produced {e}"),
        })
    }

    /// Adds the parameter gradient of `<grad_logits, forward(x)>` into `acc`.
    pub fn backward_into(&self, x: &[f64], grad_logits: &[f64], acc: &mut [f64]) -> Result<()> {
        self.check_input(x)?;
        let Shape {
            kind,
            input_dim: d,
            num_classes: k,
            hidden_width: h,
        } = self.shape;
        if grad_logits.len() != k {
            return Err(Error::invalid(format!(
                "logit gradient has {} entries, model has {k} classes",
                grad_logits.len()
            )));
        }
        if acc.len() != self.params.len() {
            return Err(Error::invalid(
                "gradient buffer does not match parameter count",
            ));
        }
        match kind {
            ModelKind::Linear => {
                let (gw, gb) = acc.split_at_mut(k * d);
                outer_add(gw, grad_logits, x);
                add(gb, grad_logits);
            }
            ModelKind::Mlp => {
                let a = self.hidden(x);
                let off = h * d + h;
                let w2 = &self.params[off..off + k * h];
                // dL/da_j = sum_c g_c W2[c, j], then through tanh
                let mut delta = vec![0.0; h];
                for (row, g) in w2.chunks_exact(h).zip(grad_logits) {
                    for (dj, w) in delta.iter_mut().zip(row) {
                        *dj += g * w;
                    }
                }
                for (dj, aj) in delta.iter_mut().zip(&a) {
                    *dj *= 1.0 - aj * aj;
                }
                let (first, second) = acc.split_at_mut(off);
                let (gw1, gb1) = first.split_at_mut(h * d);
                outer_add(gw1, &delta, x);
                add(gb1, &delta);
                let (gw2, gb2) = second.split_at_mut(k * h);
                outer_add(gw2, grad_logits, &a);
                add(gb2, grad_logits);
            }
        }
        Ok(())
    }

    pub fn backward(&self, x: &[f64], grad_logits: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.params.len()];
        self.backward_into(x, grad_logits, &mut g)?;
        Ok(g)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    w.chunks_exact(x.len())
        .zip(b)
        .map(|(row, bi)| dot(row, x) + bi)
        .collect()
}

fn outer_add(acc: &mut [f64], left: &[f64], right: &[f64]) {
    for (row, l) in acc.chunks_exact_mut(right.len()).zip(left) {
        for (a, r) in row.iter_mut().zip(right) {
            *a += l * r;
        }
    }
}

fn add(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Bias-corrected Adam moments for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize, learning_rate: f64) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
        })
    }
}

/// One Adam update of `model` in place.
///
/// Nothing is modified when `grads` contains a non-finite entry.
pub fn adam_step(model: &mut ModelParams, grads: &[f64], state: &mut AdamState) -> Result<()> {
    let n = model.params.len();
    if grads.len() != n || state.first_moment.len() != n || state.second_moment.len() != n {
        return Err(Error::invalid(format!(
            "adam shapes disagree: {n} params, {} grads, {}/{} moments",
            grads.len(),
            state.first_moment.len(),
            state.second_moment.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric {
            index: i,
            message: format!("gradient is {}", grads[i]),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in model
        .params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// A replica together with its optimizer state, as persisted on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub optimizer: AdamState,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        // re-validate the invariants serde cannot see
        let shape = Shape::new(
            ck.model.shape.kind,
            ck.model.shape.input_dim,
            ck.model.shape.num_classes,
            ck.model.shape.hidden_width,
        )?;
        ModelParams::from_params(shape, ck.model.init_seed, ck.model.params.clone())?;
        if ck.optimizer.first_moment.len() != shape.param_count()
            || ck.optimizer.second_moment.len() != shape.param_count()
        {
            return Err(Error::Validation(format!(
                "{}: optimizer state does not match parameter count",
                path.display()
            )));
        }
        Ok(ck)
    }
}
