//! Two-phase joint training of `n` classifier replicas.
//!
//! Steps are numbered from 1. Step `s` is a warm-up step when
//! `s <= floor(S * warmup_fraction)`: each replica minimizes its own
//! temperature-calibrated cross-entropy plus `alpha` times the negative
//! entropy of its prediction, and replicas exchange nothing. Later steps are
//! joint: the replicas' calibrated predictions on the shared batch are
//! averaged into a soft label and each replica additionally pays
//! `beta * KL(soft_label || p_i)`. The soft label is a constant target.
//!
//! Each replica descends the gradient of its own term of the objective. All
//! per-example gradients are averaged over the batch before the Adam update.
//!
//! Replicas can run on separate threads (`parallel`). Work is split only
//! across replicas and the per-replica reductions always run in example
//! order, so threaded and sequential runs are bit-identical.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::ensemble::{predict_single, soft_vote};
use crate::error::{Error, Result};
use crate::math::{
    argmax, entropy, objective_and_grad, temp_softmax, Logits, LossTerms, ObjectiveConfig,
    Temperature,
};
use crate::metrics::{mean_entropy, micro_f1, EvalReport};
use crate::model::{adam_step, AdamState, ModelKind, ModelParams, Shape};
use crate::rng;

const SAMPLER_STREAM: u64 = 0x5ba7_c4e5_a3b1_0001;

/// Grids swept when tuning, matching the reported search ranges.
pub const ALPHA_GRID: [f64; 5] = [1e-5, 1e-4, 1e-3, 1e-2, 5e-2];
pub const BETA_GRID: [f64; 2] = [5.0, 10.0];
pub const TEMPERATURE_GRID: [f64; 4] = [0.2, 0.3, 0.5, 0.8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub temperature: Temperature,
    /// Weight of the negative-entropy regularizer.
    pub alpha: f64,
    /// Weight of the co-regularization (KL to soft label) term.
    pub beta: f64,
    /// Fraction of steps spent in the warm-up phase.
    pub warmup_fraction: f64,
    pub replicas: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub master_seed: u64,
    pub eval_every: usize,
    pub model: ModelKind,
    pub hidden_width: usize,
    /// Class excluded from F1 credit during evaluation.
    pub negative_class: Option<usize>,
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            temperature: Temperature::new(0.5).expect("positive"),
            alpha: 1e-3,
            beta: 5.0,
            warmup_fraction: 0.3,
            replicas: 2,
            steps: 1000,
            batch_size: 32,
            learning_rate: 1e-3,
            master_seed: 0,
            eval_every: 50,
            model: ModelKind::Mlp,
            hidden_width: crate::model::DEFAULT_HIDDEN_WIDTH,
            negative_class: None,
            parallel: false,
        }
    }
}

impl TrainConfig {
    /// Independent cross-entropy training: no entropy term, no co-regularization,
    /// unit temperature, and no joint phase.
    pub fn plain_baseline(&self) -> TrainConfig {
        TrainConfig {
            temperature: Temperature::ONE,
            alpha: 0.0,
            beta: 0.0,
            warmup_fraction: 1.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad(format!(
                "warmup_fraction must lie in [0, 1], got {}",
                self.warmup_fraction
            ));
        }
        if self.replicas < 2 {
            return bad(format!("need at least 2 replicas, got {}", self.replicas));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return bad("batch_size and eval_every must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.model == ModelKind::Mlp && self.hidden_width == 0 {
            return bad("hidden_width must be at least 1".into());
        }
        Ok(())
    }

    /// Number of warm-up steps, `floor(S * warmup_fraction)`.
    pub fn warmup_steps(&self) -> usize {
        (self.steps as f64 * self.warmup_fraction).floor() as usize
    }

    /// Phase of the 1-based step `s`.
    pub fn phase_of(&self, s: usize) -> Phase {
        if s <= self.warmup_steps() {
            Phase::Warmup
        } else {
            Phase::Joint
        }
    }

    pub fn replica_seed(&self, index: usize) -> u64 {
        self.master_seed.wrapping_add(index as u64)
    }

    /// Seed of the batch sampler's stream.
    pub fn sampler_seed(&self) -> u64 {
        self.master_seed ^ SAMPLER_STREAM
    }

    fn objective(&self, phase: Phase) -> ObjectiveConfig {
        ObjectiveConfig {
            temperature: self.temperature,
            alpha: self.alpha,
            beta: self.beta,
            joint: phase == Phase::Joint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warmup,
    Joint,
}

/// Epoch-shuffled sampling without replacement. A batch never spans two
/// epochs, so the last batch of an epoch may be short.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSampler {
    rng: rng::Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
}

impl BatchSampler {
    pub fn new(len: usize, seed: u64) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid(
                "cannot sample batches from an empty dataset",
            ));
        }
        Ok(BatchSampler {
            rng: rng::seeded(seed),
            order: (0..len).collect(),
            cursor: len,
            epoch: 0,
        })
    }

    /// Epochs started so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// True when the previous batch closed out an epoch.
    pub fn at_epoch_end(&self) -> bool {
        self.cursor == self.order.len()
    }

    pub fn next_batch(&mut self, batch_size: usize) -> Vec<usize> {
        if self.at_epoch_end() {
            rng::shuffle(&mut self.rng, &mut self.order);
            self.cursor = 0;
            self.epoch += 1;
        }
        let end = (self.cursor + batch_size.max(1)).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }
}

/// Draws the next batch of `dataset` from `sampler`.
pub fn sample_batch<'a>(
    dataset: &'a Dataset,
    batch_size: usize,
    sampler: &mut BatchSampler,
) -> Result<Vec<&'a crate::data::Example>> {
    if dataset.is_empty() {
        return Err(Error::invalid(
            "cannot sample batches from an empty dataset",
        ));
    }
    if sampler.order.len() != dataset.len() {
        return Err(Error::invalid(
            "sampler was built for a dataset of another size",
        ));
    }
    Ok(sampler
        .next_batch(batch_size)
        .into_iter()
        .map(|i| &dataset.examples[i])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replica {
    pub model: ModelParams,
    pub optimizer: AdamState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCheckpoint {
    pub step: usize,
    pub dev_f1: f64,
    pub replica_f1: Vec<f64>,
    pub replicas: Vec<Replica>,
}

impl BestCheckpoint {
    pub fn models(&self) -> Vec<ModelParams> {
        self.replicas.iter().map(|r| r.model.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    /// Completed steps.
    pub step: usize,
    pub replicas: Vec<Replica>,
    pub sampler: BatchSampler,
    pub best: Option<BestCheckpoint>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig, train: &Dataset) -> Result<Self> {
        cfg.validate()?;
        let shape = Shape::new(
            cfg.model,
            train.feature_dim,
            train.num_classes,
            cfg.hidden_width,
        )?;
        let replicas = (0..cfg.replicas)
            .map(|i| {
                let model = ModelParams::init(shape, cfg.replica_seed(i));
                let optimizer = AdamState::new(model.param_count(), cfg.learning_rate)?;
                Ok(Replica { model, optimizer })
            })
            .collect::<Result<_>>()?;
        Ok(TrainState {
            step: 0,
            replicas,
            sampler: BatchSampler::new(train.len(), cfg.sampler_seed())?,
            best: None,
        })
    }

    pub fn models(&self) -> Vec<ModelParams> {
        self.replicas.iter().map(|r| r.model.clone()).collect()
    }
}

/// Diagnostics for one optimization step, averaged over the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub phase: Phase,
    pub losses: Vec<LossTerms>,
    /// Mean over replicas of the per-replica objective.
    pub total_loss: f64,
    /// `(1/n) sum_i KL(soft_label || p_i)`; zero during warm-up.
    pub co_regularization: f64,
    pub mean_entropy_t: f64,
    pub mean_entropy_t1: f64,
    pub batch_accuracy: Vec<f64>,
}

fn par_map<T: Sync, U: Send>(
    parallel: bool,
    items: &[T],
    f: impl Fn(&T) -> U + Sync + Send,
) -> Vec<U> {
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

/// One update of every replica on `batch` under the given phase's objective.
///
/// [`train`] picks the phase from the step counter; callers driving steps
/// by hand choose it themselves.
pub fn step_with_phase(
    state: &mut TrainState,
    batch: &[&crate::data::Example],
    cfg: &TrainConfig,
    phase: Phase,
) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let step = state.step + 1;
    let diverged = |e: Error| match e {
        Error::Numeric { message, .. } | Error::InvalidArgument(message) => {
            Error::Diverged { step, message }
        }
        other => other,
    };
    let n = state.replicas.len();
    let b = batch.len();

    // forward all replicas, then meet at the barrier
    let logits: Vec<Vec<Logits>> = par_map(cfg.parallel, &state.replicas, |r| {
        batch
            .iter()
            .map(|ex| r.model.forward(&ex.features))
            .collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect::<Result<_>>()
    .map_err(diverged)?;

    let objective = cfg.objective(phase);
    let mut grads_per_replica: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(b); n];
    let mut sums = vec![LossTerms::default(); n];
    let mut correct = vec![0usize; n];
    let mut entropy_t = 0.0;
    let mut entropy_t1 = 0.0;
    let mut example_logits = Vec::with_capacity(n);
    for (j, ex) in batch.iter().enumerate() {
        example_logits.clear();
        example_logits.extend(logits.iter().map(|per| per[j].clone()));
        let out = objective_and_grad(&example_logits, ex.label, &objective).map_err(diverged)?;
        for (i, (terms, grad)) in out.terms.iter().zip(out.grads).enumerate() {
            sums[i].ce += terms.ce;
            sums[i].nie += terms.nie;
            sums[i].kl += terms.kl;
            sums[i].total += terms.total;
            grads_per_replica[i].push(grad);
            if argmax(example_logits[i].as_slice()) == ex.label {
                correct[i] += 1;
            }
            entropy_t += entropy(&out.probs[i]);
            entropy_t1 += entropy(&temp_softmax(&example_logits[i], Temperature::ONE));
        }
    }
    let scale = 1.0 / b as f64;
    let losses: Vec<LossTerms> = sums
        .iter()
        .map(|s| LossTerms {
            ce: s.ce * scale,
            nie: s.nie * scale,
            kl: s.kl * scale,
            total: s.total * scale,
        })
        .collect();
    if let Some(bad) = losses.iter().position(|l| !l.total.is_finite()) {
        return Err(Error::Diverged {
            step,
            message: format!("replica {bad} loss is {}", losses[bad].total),
        });
    }

    let jobs: Vec<(&mut Replica, Vec<Vec<f64>>)> =
        state.replicas.iter_mut().zip(grads_per_replica).collect();
    let update = |(replica, grads): (&mut Replica, Vec<Vec<f64>>)| -> Result<()> {
        let mut acc = vec![0.0; replica.model.param_count()];
        for (ex, g) in batch.iter().zip(&grads) {
            replica.model.backward_into(&ex.features, g, &mut acc)?;
        }
        for a in &mut acc {
            *a *= scale;
        }
        adam_step(&mut replica.model, &acc, &mut replica.optimizer)
    };
    let results: Vec<Result<()>> = if cfg.parallel {
        jobs.into_par_iter().map(update).collect()
    } else {
        jobs.into_iter().map(update).collect()
    };
    results
        .into_iter()
        .collect::<Result<()>>()
        .map_err(diverged)?;
    state.step = step;

    let nb = (n * b) as f64;
    Ok(StepReport {
        step,
        phase,
        total_loss: losses.iter().map(|l| l.total).sum::<f64>() / n as f64,
        co_regularization: losses.iter().map(|l| l.kl).sum::<f64>() / n as f64,
        losses,
        mean_entropy_t: entropy_t / nb,
        mean_entropy_t1: entropy_t1 / nb,
        batch_accuracy: correct.iter().map(|&c| c as f64 * scale).collect(),
    })
}

/// Independent update: `CE(p_i, y) + alpha * NIE(p_i)` per replica.
pub fn warmup_step(
    state: &mut TrainState,
    batch: &[&crate::data::Example],
    cfg: &TrainConfig,
) -> Result<StepReport> {
    step_with_phase(state, batch, cfg, Phase::Warmup)
}

/// Coupled update adding `beta * KL(soft_label || p_i)` per replica.
pub fn joint_step(
    state: &mut TrainState,
    batch: &[&crate::data::Example],
    cfg: &TrainConfig,
) -> Result<StepReport> {
    step_with_phase(state, batch, cfg, Phase::Joint)
}

/// Scores of a replica set on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEval {
    /// Soft-vote predictions.
    pub vote: EvalReport,
    /// Each replica on its own.
    pub replicas: Vec<EvalReport>,
}

/// Evaluates replicas on `data` against its observed labels.
pub fn evaluate(
    models: &[ModelParams],
    data: &Dataset,
    negative_class: Option<usize>,
) -> Result<EnsembleEval> {
    let first = models
        .first()
        .ok_or_else(|| Error::invalid("no models to evaluate"))?;
    for m in models {
        if m.shape.input_dim != data.feature_dim || m.shape.num_classes != data.num_classes {
            return Err(Error::Validation(format!(
                "model expects D={} K={}, dataset has D={} K={}",
                m.shape.input_dim, m.shape.num_classes, data.feature_dim, data.num_classes
            )));
        }
    }
    let k = first.shape.num_classes;
    let golds = data.labels();
    let mut vote_preds = Vec::with_capacity(data.len());
    let mut single_preds = vec![Vec::with_capacity(data.len()); models.len()];
    let mut probs = vec![Vec::with_capacity(data.len()); models.len()];
    for ex in &data.examples {
        let logits = models
            .iter()
            .map(|m| m.forward(&ex.features))
            .collect::<Result<Vec<_>>>()?;
        vote_preds.push(soft_vote(&logits)?.predicted);
        for (i, l) in logits.iter().enumerate() {
            single_preds[i].push(predict_single(l));
            probs[i].push(temp_softmax(l, Temperature::ONE));
        }
    }
    let entropies = probs
        .iter()
        .map(|p| {
            if p.is_empty() {
                Ok(None)
            } else {
                mean_entropy(p).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut replicas = Vec::with_capacity(models.len());
    for (preds, h) in single_preds.iter().zip(&entropies) {
        let mut r = micro_f1(preds, &golds, k, negative_class)?;
        r.mean_entropy_t1 = *h;
        replicas.push(r);
    }
    let mut vote = micro_f1(&vote_preds, &golds, k, negative_class)?;
    vote.mean_entropy_t1 = entropies
        .iter()
        .copied()
        .sum::<Option<f64>>()
        .map(|s| s / models.len() as f64);
    Ok(EnsembleEval { vote, replicas })
}

/// Periodic evaluation line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub split: String,
    /// Soft-vote micro-F1.
    pub f1: f64,
    pub accuracy: f64,
    pub mean_entropy: f64,
    pub replica_f1: Vec<f64>,
}

impl EvalRecord {
    fn new(step: usize, split: &str, e: &EnsembleEval) -> Self {
        EvalRecord {
            step,
            split: split.to_string(),
            f1: e.vote.micro_f1,
            accuracy: e.vote.accuracy,
            mean_entropy: e.vote.mean_entropy_t1.unwrap_or(0.0),
            replica_f1: e.replicas.iter().map(|r| r.micro_f1).collect(),
        }
    }
}

/// Training-set diagnostics over one pass of the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub last_step: usize,
    pub mean_loss: f64,
    /// Batch-size weighted mean of the step entropies; every training
    /// example contributes exactly once.
    pub mean_entropy_t: f64,
    pub mean_entropy_t1: f64,
}

/// One line of the JSON Lines metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogRecord {
    Step(StepReport),
    Eval(EvalRecord),
    Epoch(EpochSummary),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub replicas: Vec<Replica>,
    pub best: BestCheckpoint,
    pub reports: Vec<StepReport>,
    pub evals: Vec<EvalRecord>,
    pub epochs: Vec<EpochSummary>,
}

impl TrainOutcome {
    /// Every record in the order it was produced.
    pub fn log(&self) -> Vec<LogRecord> {
        let mut out = Vec::with_capacity(self.reports.len() + self.evals.len() + self.epochs.len());
        let (mut e, mut p) = (self.evals.iter().peekable(), self.epochs.iter().peekable());
        let flush =
            |out: &mut Vec<LogRecord>,
             step: usize,
             e: &mut std::iter::Peekable<std::slice::Iter<EvalRecord>>,
             p: &mut std::iter::Peekable<std::slice::Iter<EpochSummary>>| {
                while let Some(ep) = p.next_if(|x| x.last_step <= step) {
                    out.push(LogRecord::Epoch(ep.clone()));
                }
                while let Some(ev) = e.next_if(|x| x.step <= step) {
                    out.push(LogRecord::Eval(ev.clone()));
                }
            };
        flush(&mut out, 0, &mut e, &mut p);
        for r in &self.reports {
            out.push(LogRecord::Step(r.clone()));
            flush(&mut out, r.step, &mut e, &mut p);
        }
        flush(&mut out, usize::MAX, &mut e, &mut p);
        out
    }

    pub fn log_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for rec in self.log() {
            s.push_str(&serde_json::to_string(&rec)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn final_models(&self) -> Vec<ModelParams> {
        self.replicas.iter().map(|r| r.model.clone()).collect()
    }
}

fn check_compatible(train: &Dataset, dev: &Dataset) -> Result<()> {
    if train.num_classes != dev.num_classes || train.feature_dim != dev.feature_dim {
        return Err(Error::Validation(format!(
            "train (K={}, D={}) and dev (K={}, D={}) disagree",
            train.num_classes, train.feature_dim, dev.num_classes, dev.feature_dim
        )));
    }
    Ok(())
}

/// Runs `cfg.steps` steps, evaluating the soft vote on `dev` every
/// `eval_every` steps and after the final step, and keeps the replica set
/// with the highest dev F1 (earliest wins ties).
pub fn train(train_set: &Dataset, dev: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    check_compatible(train_set, dev)?;
    let mut state = TrainState::new(cfg, train_set)?;
    let mut reports = Vec::with_capacity(cfg.steps);
    let mut evals = Vec::new();
    let mut epochs = Vec::new();
    let mut epoch_acc = (0usize, 0.0, 0.0, 0.0);

    let record_eval = |state: &mut TrainState, evals: &mut Vec<EvalRecord>| -> Result<()> {
        let models = state.models();
        let e = evaluate(&models, dev, cfg.negative_class)?;
        let rec = EvalRecord::new(state.step, "dev", &e);
        if state.best.as_ref().is_none_or(|b| rec.f1 > b.dev_f1) {
            state.best = Some(BestCheckpoint {
                step: state.step,
                dev_f1: rec.f1,
                replica_f1: rec.replica_f1.clone(),
                replicas: state.replicas.clone(),
            });
        }
        evals.push(rec);
        Ok(())
    };

    if cfg.steps == 0 {
        record_eval(&mut state, &mut evals)?;
    }
    for s in 1..=cfg.steps {
        let batch = sample_batch(train_set, cfg.batch_size, &mut state.sampler)?;
        let report = step_with_phase(&mut state, &batch, cfg, cfg.phase_of(s))?;
        let w = batch.len();
        epoch_acc.0 += w;
        epoch_acc.1 += report.total_loss * w as f64;
        epoch_acc.2 += report.mean_entropy_t * w as f64;
        epoch_acc.3 += report.mean_entropy_t1 * w as f64;
        reports.push(report);
        if state.sampler.at_epoch_end() {
            let m = epoch_acc.0 as f64;
            epochs.push(EpochSummary {
                epoch: state.sampler.epoch(),
                last_step: s,
                mean_loss: epoch_acc.1 / m,
                mean_entropy_t: epoch_acc.2 / m,
                mean_entropy_t1: epoch_acc.3 / m,
            });
            epoch_acc = (0, 0.0, 0.0, 0.0);
        }
        if s % cfg.eval_every == 0 || s == cfg.steps {
            record_eval(&mut state, &mut evals)?;
        }
    }
    let best = state.best.take().expect("at least one evaluation ran");
    Ok(TrainOutcome {
        replicas: state.replicas,
        best,
        reports,
        evals,
        epochs,
    })
}
