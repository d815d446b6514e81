//! Independent oracles shared by the integration tests. The reference
//! losses are recomputed with plain loops so they share nothing with the
//! code under test beyond `f64`.

#![allow(dead_code)]

use rand::Rng;
use rand_xoshiro::Xoshiro256PlusPlus;
use tiera::data::Dataset;
use tiera::math::{objective_and_grad, Logits, ObjectiveConfig, Temperature};
use tiera::model::{adam_step, AdamState, ModelKind, ModelParams, Shape};
use tiera::trainer::{BatchSampler, TrainConfig};

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-5;

pub fn ref_softmax(l: &[f64], t: f64) -> Vec<f64> {
    let m = l.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = l.iter().map(|v| ((v - m) / t).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Replica `i`'s objective with the soft label frozen at `target`.
pub fn ref_loss(l: &[f64], y: usize, t: f64, alpha: f64, beta: f64, target: Option<&[f64]>) -> f64 {
    let p = ref_softmax(l, t);
    let mut loss = -p[y].max(1e-12).ln();
    let neg_entropy: f64 = p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum();
    loss += alpha * neg_entropy;
    if let Some(s) = target {
        let kl: f64 = s
            .iter()
            .zip(&p)
            .filter(|(&sk, _)| sk > 0.0)
            .map(|(sk, pk)| sk * (sk.ln() - pk.max(1e-12).ln()))
            .sum();
        loss += beta * kl;
    }
    loss
}

pub fn ref_soft_label(logits: &[Vec<f64>], t: f64) -> Vec<f64> {
    let k = logits[0].len();
    let mut s = vec![0.0; k];
    for l in logits {
        for (a, b) in s.iter_mut().zip(ref_softmax(l, t)) {
            *a += b / logits.len() as f64;
        }
    }
    s
}

/// `|a - b| / max(|a|, |b|, 1)`: relative, with an absolute floor near zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|j| {
            let orig = xp[j];
            xp[j] = orig + H;
            let up = f(&xp);
            xp[j] = orig - H;
            let down = f(&xp);
            xp[j] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

/// Checks one configuration; returns the worst relative error seen.
pub fn check_objective(
    rng: &mut Xoshiro256PlusPlus,
    n: usize,
    k: usize,
    t: f64,
    alpha: f64,
    beta: f64,
) -> f64 {
    let raw: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect();
    let y = rng.gen_range(0..k);
    let joint = rng.gen_bool(0.8);
    let cfg = ObjectiveConfig {
        temperature: Temperature::new(t).unwrap(),
        alpha,
        beta,
        joint,
    };
    let logits: Vec<Logits> = raw
        .iter()
        .map(|v| Logits::new(v.clone()).unwrap())
        .collect();
    let out = objective_and_grad(&logits, y, &cfg).unwrap();
    let target = ref_soft_label(&raw, t);
    let mut worst: f64 = 0.0;
    let tgt = joint.then_some(target.as_slice());
    for (i, l) in raw.iter().enumerate() {
        let loss = ref_loss(l, y, t, alpha, beta, tgt);
        assert!(rel_err(out.terms[i].total, loss) < 1e-12, "loss mismatch");
        let fd = central_diff(|l| ref_loss(l, y, t, alpha, beta, tgt), l);
        for (a, b) in out.grads[i].iter().zip(&fd) {
            worst = worst.max(rel_err(*a, *b));
        }
    }
    worst
}

pub fn check_backward(rng: &mut Xoshiro256PlusPlus, kind: ModelKind) -> f64 {
    let d = rng.gen_range(1..8);
    let k = rng.gen_range(2..6);
    let h = rng.gen_range(1..9);
    let shape = Shape::new(kind, d, k, h).unwrap();
    let model = ModelParams::init(shape, rng.gen());
    let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let up: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let analytic = model.backward(&x, &up).unwrap();
    let f = |p: &[f64]| {
        let m = ModelParams::from_params(shape, 0, p.to_vec()).unwrap();
        let l = m.forward(&x).unwrap();
        l.as_slice()
            .iter()
            .zip(&up)
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };
    let fd = central_diff(f, &model.params);
    analytic
        .iter()
        .zip(&fd)
        .map(|(a, b)| rel_err(*a, *b))
        .fold(0.0, f64::max)
}

/// Textbook softmax cross-entropy training of one model with Adam, written
/// independently of the trainer. Returns parameters after every step.
pub fn plain_trainer(data: &Dataset, cfg: &TrainConfig, replica: usize) -> Vec<Vec<f64>> {
    let shape = Shape::new(
        cfg.model,
        data.feature_dim,
        data.num_classes,
        cfg.hidden_width,
    )
    .unwrap();
    let mut model = ModelParams::init(shape, cfg.replica_seed(replica));
    let mut adam = AdamState::new(model.param_count(), cfg.learning_rate).unwrap();
    let mut sampler = BatchSampler::new(data.len(), cfg.sampler_seed()).unwrap();
    let t = cfg.temperature.value();
    let mut trace = Vec::new();
    for _ in 0..cfg.steps {
        let batch = sampler.next_batch(cfg.batch_size);
        let mut acc = vec![0.0; model.param_count()];
        for &i in &batch {
            let ex = &data.examples[i];
            let l = model.forward(&ex.features).unwrap();
            let l = l.as_slice();
            let max = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = l.iter().map(|v| ((v - max) / t).exp()).collect();
            let z: f64 = e.iter().sum();
            let g: Vec<f64> = e
                .iter()
                .enumerate()
                .map(|(k, v)| (v / z - if k == ex.label { 1.0 } else { 0.0 }) * (1.0 / t))
                .collect();
            model.backward_into(&ex.features, &g, &mut acc).unwrap();
        }
        for a in &mut acc {
            *a *= 1.0 / batch.len() as f64;
        }
        adam_step(&mut model, &acc, &mut adam).unwrap();
        trace.push(model.params.clone());
    }
    trace
}
