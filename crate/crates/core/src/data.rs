//! Labeled feature-vector datasets: synthetic generation, label-noise
//! injection, seeded splitting, and JSON Lines persistence.
//!
//! File format, one JSON object per line:
//!
//! ```text
//! {"K": 5, "D": 20}
//! {"x": [0.12, -1.5, ...], "y": 3}
//! {"x": [...], "y": 1, "y_orig": 4, "flipped": true}
//! ```
//!
//! Reals are written in shortest round-trip form, so save/load is bit-exact.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
    /// Label before noise injection, when the example went through it.
    pub original_label: Option<usize>,
    pub flipped: bool,
}

impl Example {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Example {
            features,
            label,
            original_label: None,
            flipped: false,
        }
    }

    /// The clean label if known, otherwise the observed one.
    pub fn true_label(&self) -> usize {
        self.original_label.unwrap_or(self.label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(num_classes: usize, feature_dim: usize, examples: Vec<Example>) -> Result<Self> {
        let d = Dataset {
            num_classes,
            feature_dim,
            examples,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Validation("dataset needs at least 2 classes".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Validation(
                "feature dimension must be at least 1".into(),
            ));
        }
        for (i, ex) in self.examples.iter().enumerate() {
            check_example(ex, self.num_classes, self.feature_dim)
                .map_err(|m| Error::Validation(format!("example {i}: {m}")))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for ex in &self.examples {
            counts[ex.label] += 1;
        }
        counts
    }

    /// Copy with observed labels reset to their clean values and flags cleared.
    pub fn restored(&self) -> Dataset {
        Dataset {
            examples: self
                .examples
                .iter()
                .map(|e| Example::new(e.features.clone(), e.true_label()))
                .collect(),
            ..*self
        }
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }
}

fn check_example(ex: &Example, k: usize, d: usize) -> std::result::Result<(), String> {
    if ex.features.len() != d {
        return Err(format!("{} features, expected {d}", ex.features.len()));
    }
    if ex.features.iter().any(|v| !v.is_finite()) {
        return Err("non-finite feature".into());
    }
    if ex.label >= k {
        return Err(format!("label {} out of range for K={k}", ex.label));
    }
    if let Some(o) = ex.original_label {
        if o >= k {
            return Err(format!("original label {o} out of range for K={k}"));
        }
    }
    if ex.flipped && ex.original_label.is_none_or(|o| o == ex.label) {
        return Err("flipped example must carry a different original label".into());
    }
    Ok(())
}

/// Isotropic Gaussian mixture with one component per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub spread: f64,
    pub count: usize,
    pub seed: u64,
}

/// Class prior shapes accepted by [`MixtureSpec::random`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Priors {
    Uniform,
    /// Weight of class `c` proportional to `1 / (c + 1)^exponent`.
    Zipf {
        exponent: f64,
    },
}

impl Priors {
    pub fn weights(self, k: usize) -> Vec<f64> {
        let raw: Vec<f64> = match self {
            Priors::Uniform => vec![1.0; k],
            Priors::Zipf { exponent } => (0..k).map(|c| ((c + 1) as f64).powf(-exponent)).collect(),
        };
        let total: f64 = raw.iter().sum();
        raw.iter().map(|w| w / total).collect()
    }
}

impl MixtureSpec {
    /// Class means drawn as `separation * N(0, I)` from `seed`; the samples use
    /// an independent stream derived from the same seed.
    pub fn random(
        num_classes: usize,
        feature_dim: usize,
        priors: Priors,
        separation: f64,
        spread: f64,
        count: usize,
        seed: u64,
    ) -> Self {
        let mut r = rng::seeded(seed ^ 0x6d65_616e_735f_7631);
        let means = (0..num_classes)
            .map(|_| {
                (0..feature_dim)
                    .map(|_| separation * rng::standard_normal(&mut r))
                    .collect()
            })
            .collect();
        MixtureSpec {
            num_classes,
            feature_dim,
            priors: priors.weights(num_classes),
            means,
            spread,
            count,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes;
        if k < 2 || self.feature_dim == 0 {
            return Err(Error::Validation(format!(
                "mixture needs K >= 2 and D >= 1, got K={k} D={}",
                self.feature_dim
            )));
        }
        if self.priors.len() != k || self.means.len() != k {
            return Err(Error::Validation(format!(
                "mixture has {} priors and {} means for K={k}",
                self.priors.len(),
                self.means.len()
            )));
        }
        if self.priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Validation("priors must be non-negative".into()));
        }
        let total: f64 = self.priors.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "priors sum to {total}, expected 1"
            )));
        }
        if self
            .means
            .iter()
            .any(|m| m.len() != self.feature_dim || m.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Validation(format!(
                "every mean must have {} finite entries",
                self.feature_dim
            )));
        }
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(Error::Validation(format!(
                "spread must be positive, got {}",
                self.spread
            )));
        }
        Ok(())
    }
}

/// Samples `spec.count` examples: class from the priors, then features from
/// `N(mean_class, spread^2 I)`.
pub fn generate_mixture(spec: &MixtureSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut r = rng::seeded(spec.seed);
    let mut cumulative = Vec::with_capacity(spec.num_classes);
    let mut acc = 0.0;
    for p in &spec.priors {
        acc += p;
        cumulative.push(acc);
    }
    let examples = (0..spec.count)
        .map(|_| {
            let u = rng::unit(&mut r) * acc;
            // zero-weight classes can never be picked
            let class = cumulative
                .iter()
                .zip(&spec.priors)
                .position(|(c, p)| u < *c && *p > 0.0)
                .unwrap_or_else(|| spec.priors.iter().rposition(|p| *p > 0.0).unwrap_or(0));
            let features = spec.means[class]
                .iter()
                .map(|m| m + spec.spread * rng::standard_normal(&mut r))
                .collect();
            Example::new(features, class)
        })
        .collect();
    Dataset::new(spec.num_classes, spec.feature_dim, examples)
}

/// Uniform-complement label noise: a flipped example gets one of the other
/// `K - 1` classes with equal probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub flip_rate: f64,
    pub seed: u64,
}

/// Number of labels [`inject_noise`] changes for a dataset of `n` examples.
pub fn flip_count(flip_rate: f64, n: usize) -> usize {
    (flip_rate * n as f64).round() as usize
}

/// Flips exactly `round(flip_rate * N)` labels, chosen by a seeded permutation.
/// Features are never touched.
pub fn inject_noise(d: &Dataset, spec: &NoiseSpec) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&spec.flip_rate) {
        return Err(Error::invalid(format!(
            "flip rate must lie in [0, 1], got {}",
            spec.flip_rate
        )));
    }
    let mut r = rng::seeded(spec.seed);
    let mut order: Vec<usize> = (0..d.len()).collect();
    rng::shuffle(&mut r, &mut order);
    let mut out = d.clone();
    let k = d.num_classes;
    for &i in &order[..flip_count(spec.flip_rate, d.len())] {
        let ex = &mut out.examples[i];
        let mut new = rng::index(&mut r, k - 1);
        if new >= ex.label {
            new += 1;
        }
        let original = ex.true_label();
        ex.label = new;
        ex.original_label = Some(original);
        ex.flipped = new != original;
    }
    Ok(out)
}

/// One corrupted example: where it sits and what it used to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipRecord {
    pub index: usize,
    pub original_label: usize,
    pub noisy_label: usize,
}

pub fn flip_manifest(d: &Dataset) -> Vec<FlipRecord> {
    d.examples
        .iter()
        .enumerate()
        .filter(|(_, e)| e.flipped)
        .map(|(index, e)| FlipRecord {
            index,
            original_label: e.true_label(),
            noisy_label: e.label,
        })
        .collect()
}

/// Undoes the flips listed in `manifest`.
pub fn apply_manifest(d: &Dataset, manifest: &[FlipRecord]) -> Result<Dataset> {
    let mut out = d.clone();
    for rec in manifest {
        let ex = out.examples.get_mut(rec.index).ok_or_else(|| {
            Error::Validation(format!("manifest index {} beyond dataset", rec.index))
        })?;
        if ex.label != rec.noisy_label || rec.original_label >= d.num_classes {
            return Err(Error::Validation(format!(
                "manifest entry for example {} does not match the dataset",
                rec.index
            )));
        }
        *ex = Example::new(std::mem::take(&mut ex.features), rec.original_label);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
}

/// Seeded shuffle, then contiguous train/dev/test slices. Dev and test get
/// `floor(f * N)` examples; train takes the rest.
pub fn split(d: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Splits> {
    let (ft, fd, fs) = fractions;
    if [ft, fd, fs].iter().any(|f| !(f.is_finite() && *f > 0.0))
        || (ft + fd + fs - 1.0).abs() > 1e-9
    {
        return Err(Error::invalid(format!(
            "split fractions must be positive and sum to 1, got ({ft}, {fd}, {fs})"
        )));
    }
    let n = d.len();
    let size = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
    let (n_dev, n_test) = (size(fd), size(fs));
    let n_train = n - n_dev - n_test;
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::seeded(seed), &mut order);
    Ok(Splits {
        train: d.subset(&order[..n_train]),
        dev: d.subset(&order[n_train..n_train + n_dev]),
        test: d.subset(&order[n_train + n_dev..]),
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "D")]
    d: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    x: Vec<f64>,
    y: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    y_orig: Option<usize>,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    flipped: bool,
}

/// Serializes `d` in the JSON Lines dataset format.
pub fn to_jsonl(d: &Dataset) -> Result<String> {
    let mut out = serde_json::to_string(&Header {
        k: d.num_classes,
        d: d.feature_dim,
    })?;
    out.push('\n');
    for ex in &d.examples {
        let rec = Record {
            x: ex.features.clone(),
            y: ex.label,
            y_orig: ex.original_label,
            flipped: ex.flipped,
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&rec)?);
    }
    Ok(out)
}

pub fn save(d: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_jsonl(d)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines().enumerate();
    let header: Header = loop {
        match lines.next() {
            None => return Err(parse_err(1, "missing header line".into())),
            Some((i, line)) => {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
            }
        }
    };
    if header.k < 2 || header.d == 0 {
        return Err(Error::Validation(format!(
            "{}: header needs K >= 2 and D >= 1",
            path.display()
        )));
    }
    let mut examples = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        let ex = Example {
            features: rec.x,
            label: rec.y,
            original_label: rec.y_orig,
            flipped: rec.flipped,
        };
        check_example(&ex, header.k, header.d)
            .map_err(|m| Error::Validation(format!("{}: line {}: {m}", path.display(), i + 1)))?;
        examples.push(ex);
    }
    Ok(Dataset {
        num_classes: header.k,
        feature_dim: header.d,
        examples,
    })
}
