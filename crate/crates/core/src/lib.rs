//! Noise-robust joint training of classifier replicas.
//!
//! `n` identically shaped, differently initialized classifiers are trained
//! together. Each minimizes a temperature-calibrated cross-entropy with a
//! negative-entropy penalty on overconfidence; after a warm-up phase each is
//! also pulled toward the mean of all replicas' calibrated predictions with
//! a KL term. At prediction time the replicas' L2-normalized logits are
//! summed into a soft vote.
//!
//! Modules, bottom-up:
//!
//! - [`math`]: softmax, cross-entropy, entropy, KL, aggregation, and the
//!   per-example objective with its logit gradient.
//! - [`model`]: linear and one-hidden-layer tanh classifiers with Adam.
//! - [`ensemble`]: soft vote and single-replica prediction.
//! - [`metrics`]: micro-F1 with optional negative class, entropy means.
//! - [`data`]: Gaussian-mixture datasets, label-flip noise, splits, JSONL.
//! - [`trainer`]: the two-phase training loop and checkpoint selection.
//! - [`experiment`]: config-driven generate/corrupt/train/evaluate/sweep
//!   commands behind the `tiera` binary.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod math;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
