//! Config-driven experiment commands: generate, corrupt, train, evaluate,
//! and sweep. The `tiera` binary is a thin argument parser over these.
//!
//! A config is one flat JSON object. Training keys are those of
//! [`TrainConfig`]; the rest describe where data comes from and what to
//! report:
//!
//! ```json
//! {
//!   "out_dir": "runs/noise30",
//!   "mixture": {"num_classes": 5, "feature_dim": 20, "separation": 0.5,
//!               "spread": 1.0, "count": 3000, "seed": 1},
//!   "split": [0.6666666666666666, 0.16666666666666666, 0.16666666666666666],
//!   "noise": {"flip_rate": 0.3, "seed": 2},
//!   "seeds": 5, "baseline": true,
//!   "temperature": 0.5, "alpha": 0.001, "beta": 5.0, "warmup_fraction": 0.3
//! }
//! ```
//!
//! Data comes from `train_path`/`dev_path`/`test_path` when set, otherwise
//! from `mixture` split by `split`. `noise` corrupts the training split only.
//! Every artifact lands under `out_dir`:
//!
//! ```text
//! train.jsonl dev.jsonl test.jsonl          generate
//! flip_manifest.json                        corrupt
//! summary.json                              train
//! seed_<k>/metrics.jsonl                    train, per seed
//! seed_<k>/checkpoint_<replica>.json        train, best checkpoint
//! seed_<k>/baseline_metrics.jsonl           train, with "baseline": true
//! sweep.csv sweep.json cell_<i>/...         sweep
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, Dataset, FlipRecord, MixtureSpec, NoiseSpec, Priors};
use crate::error::{Error, Result};
use crate::math::Temperature;
use crate::model::Checkpoint;
use crate::trainer::{self, EnsembleEval, TrainConfig, TrainOutcome};

/// Synthetic data description inside an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Explicit class weights; must sum to one.
    #[serde(default)]
    pub priors: Option<Vec<f64>>,
    /// Long-tail weights `1/(c+1)^s` when `priors` is absent.
    #[serde(default)]
    pub zipf_exponent: Option<f64>,
    /// Explicit class means; drawn as `separation * N(0, I)` when absent.
    #[serde(default)]
    pub means: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_separation")]
    pub separation: f64,
    pub spread: f64,
    pub count: usize,
    pub seed: u64,
}

fn default_separation() -> f64 {
    1.0
}

impl MixtureConfig {
    pub fn to_spec(&self) -> MixtureSpec {
        let shape = match self.zipf_exponent {
            Some(exponent) => Priors::Zipf { exponent },
            None => Priors::Uniform,
        };
        let mut spec = MixtureSpec::random(
            self.num_classes,
            self.feature_dim,
            shape,
            self.separation,
            self.spread,
            self.count,
            self.seed,
        );
        if let Some(p) = &self.priors {
            spec.priors = p.clone();
        }
        if let Some(m) = &self.means {
            spec.means = m.clone();
        }
        spec
    }
}

/// Axes of a hyperparameter sweep. Absent axes hold the base config value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub temperature: Option<Vec<f64>>,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default)]
    pub flip_rate: Option<Vec<f64>>,
    #[serde(default)]
    pub replicas: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub train_path: Option<PathBuf>,
    #[serde(default)]
    pub dev_path: Option<PathBuf>,
    #[serde(default)]
    pub test_path: Option<PathBuf>,
    #[serde(default)]
    pub mixture: Option<MixtureConfig>,
    #[serde(default = "default_split")]
    pub split: (f64, f64, f64),
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    /// Runs per configuration; run `k` uses `master_seed + k`.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    /// Also train the plain cross-entropy baseline on every seed.
    #[serde(default)]
    pub baseline: bool,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    #[serde(flatten)]
    pub train: TrainConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_split() -> (f64, f64, f64) {
    (0.8, 0.1, 0.1)
}

fn default_seeds() -> usize {
    5
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the config's canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.seeds == 0 {
            return Err(Error::Validation("seeds must be at least 1".into()));
        }
        if let Some(n) = &self.noise {
            if !(0.0..=1.0).contains(&n.flip_rate) {
                return Err(Error::Validation(format!(
                    "flip_rate must lie in [0, 1], got {}",
                    n.flip_rate
                )));
            }
        }
        Ok(())
    }
}

/// Train/dev/test data for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Option<Dataset>,
}

/// Clean splits from the configured files or mixture.
pub fn clean_datasets(cfg: &ExperimentConfig) -> Result<Datasets> {
    match (&cfg.train_path, &cfg.dev_path) {
        (Some(tr), Some(dev)) => Ok(Datasets {
            train: data::load(tr)?,
            dev: data::load(dev)?,
            test: cfg.test_path.as_deref().map(data::load).transpose()?,
        }),
        (None, None) => {
            let mix = cfg.mixture.as_ref().ok_or_else(|| {
                Error::Validation("config needs either train_path/dev_path or mixture".into())
            })?;
            let full = data::generate_mixture(&mix.to_spec())?;
            let s = data::split(&full, cfg.split, cfg.split_seed)?;
            Ok(Datasets {
                train: s.train,
                dev: s.dev,
                test: Some(s.test),
            })
        }
        _ => Err(Error::Validation(
            "train_path and dev_path must be given together".into(),
        )),
    }
}

/// [`clean_datasets`] with the configured noise applied to the training split.
pub fn prepare_datasets(cfg: &ExperimentConfig) -> Result<Datasets> {
    let mut d = clean_datasets(cfg)?;
    if let Some(noise) = &cfg.noise {
        d.train = data::inject_noise(&d.train, noise)?;
    }
    Ok(d)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub config_hash: String,
    pub files: Vec<PathBuf>,
    pub class_counts: Vec<Vec<usize>>,
}

/// Writes the mixture's train/dev/test splits as dataset files.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<GenerateSummary> {
    let mix = cfg
        .mixture
        .as_ref()
        .ok_or_else(|| Error::Validation("generate needs a mixture section".into()))?;
    let full = data::generate_mixture(&mix.to_spec())?;
    let s = data::split(&full, cfg.split, cfg.split_seed)?;
    create_dir(&cfg.out_dir)?;
    let mut files = Vec::new();
    let mut class_counts = Vec::new();
    for (name, d) in [("train", &s.train), ("dev", &s.dev), ("test", &s.test)] {
        let path = cfg.out_dir.join(format!("{name}.jsonl"));
        data::save(d, &path)?;
        files.push(path);
        class_counts.push(d.class_counts());
    }
    Ok(GenerateSummary {
        config_hash: cfg.hash(),
        files,
        class_counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipManifest {
    pub source: PathBuf,
    pub flip_rate: f64,
    pub seed: u64,
    pub flips: Vec<FlipRecord>,
}

impl FlipManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Corrupts the dataset at `input` and writes it to `output`, with
/// `flip_manifest.json` beside it.
pub fn cmd_corrupt(input: &Path, noise: &NoiseSpec, output: &Path) -> Result<FlipManifest> {
    let clean = data::load(input)?;
    let noisy = data::inject_noise(&clean, noise)?;
    let manifest = FlipManifest {
        source: input.to_path_buf(),
        flip_rate: noise.flip_rate,
        seed: noise.seed,
        flips: data::flip_manifest(&noisy),
    };
    let dir = output
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    create_dir(dir)?;
    data::save(&noisy, output)?;
    write_json(&dir.join("flip_manifest.json"), &manifest)?;
    Ok(manifest)
}

/// F1 of the single-replica and soft-vote predictions on one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantScores {
    /// First replica alone.
    pub single: f64,
    /// Soft vote over all replicas.
    pub vote: f64,
}

impl VariantScores {
    fn of(e: &EnsembleEval) -> Self {
        VariantScores {
            single: e.replicas[0].micro_f1,
            vote: e.vote.micro_f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineScores {
    pub best_step: usize,
    pub dev_f1: f64,
    pub test_f1: Option<f64>,
    /// Mean T=1 prediction entropy of the final replicas on the test split.
    pub test_entropy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub best_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dev: Option<VariantScores>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test: Option<VariantScores>,
    /// Mean T=1 prediction entropy of the final replicas on the test split.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test_entropy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub baseline: Option<BaselineScores>,
}

/// Medians over the successful seeds; `None` when nothing is available.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Medians {
    pub dev_single: Option<f64>,
    pub dev_vote: Option<f64>,
    pub test_single: Option<f64>,
    pub test_vote: Option<f64>,
    pub test_entropy: Option<f64>,
    pub baseline_dev: Option<f64>,
    pub baseline_test: Option<f64>,
    pub baseline_test_entropy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub seeds: Vec<SeedResult>,
    pub failed: usize,
    pub median: Medians,
}

/// Median with the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

fn median_of(seeds: &[SeedResult], f: impl Fn(&SeedResult) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = seeds.iter().filter(|s| s.ok).filter_map(f).collect();
    median(&vals)
}

/// Outcomes of one seed, kept in memory for callers that want more than the
/// summary row.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub result: SeedResult,
    pub outcome: Option<TrainOutcome>,
    pub baseline: Option<TrainOutcome>,
}

fn test_entropy(
    outcome: &TrainOutcome,
    test: Option<&Dataset>,
    neg: Option<usize>,
) -> Result<Option<f64>> {
    match test {
        Some(t) if !t.is_empty() => Ok(trainer::evaluate(&outcome.final_models(), t, neg)?
            .vote
            .mean_entropy_t1),
        _ => Ok(None),
    }
}

fn run_one(
    data: &Datasets,
    cfg: &TrainConfig,
    baseline: bool,
) -> Result<(SeedResult, TrainOutcome, Option<TrainOutcome>)> {
    let neg = cfg.negative_class;
    let outcome = trainer::train(&data.train, &data.dev, cfg)?;
    let best = outcome.best.models();
    let dev = VariantScores::of(&trainer::evaluate(&best, &data.dev, neg)?);
    let test = data
        .test
        .as_ref()
        .map(|t| trainer::evaluate(&best, t, neg).map(|e| VariantScores::of(&e)))
        .transpose()?;
    let mut result = SeedResult {
        seed: cfg.master_seed,
        ok: true,
        error: None,
        best_step: Some(outcome.best.step),
        dev: Some(dev),
        test,
        test_entropy: test_entropy(&outcome, data.test.as_ref(), neg)?,
        baseline: None,
    };
    let base = if baseline {
        let bcfg = cfg.plain_baseline();
        let b = trainer::train(&data.train, &data.dev, &bcfg)?;
        let models = b.best.models();
        let dev_f1 = trainer::evaluate(&models, &data.dev, neg)?.replicas[0].micro_f1;
        let test_f1 = data
            .test
            .as_ref()
            .map(|t| trainer::evaluate(&models, t, neg).map(|e| e.replicas[0].micro_f1))
            .transpose()?;
        result.baseline = Some(BaselineScores {
            best_step: b.best.step,
            dev_f1,
            test_f1,
            test_entropy: test_entropy(&b, data.test.as_ref(), neg)?,
        });
        Some(b)
    } else {
        None
    };
    Ok((result, outcome, base))
}

/// Trains `seeds` runs with master seeds `cfg.master_seed + k`. A failing
/// seed is recorded rather than aborting the others.
pub fn run_seeds(data: &Datasets, cfg: &TrainConfig, seeds: usize, baseline: bool) -> Vec<SeedRun> {
    (0..seeds as u64)
        .map(|k| {
            let seed_cfg = TrainConfig {
                master_seed: cfg.master_seed.wrapping_add(k),
                ..cfg.clone()
            };
            match run_one(data, &seed_cfg, baseline) {
                Ok((result, outcome, base)) => SeedRun {
                    result,
                    outcome: Some(outcome),
                    baseline: base,
                },
                Err(e) => SeedRun {
                    result: SeedResult {
                        seed: seed_cfg.master_seed,
                        ok: false,
                        error: Some(e.to_string()),
                        best_step: None,
                        dev: None,
                        test: None,
                        test_entropy: None,
                        baseline: None,
                    },
                    outcome: None,
                    baseline: None,
                },
            }
        })
        .collect()
}

pub fn summarize(config_hash: String, seeds: Vec<SeedResult>) -> TrainSummary {
    let median = Medians {
        dev_single: median_of(&seeds, |s| s.dev.map(|d| d.single)),
        dev_vote: median_of(&seeds, |s| s.dev.map(|d| d.vote)),
        test_single: median_of(&seeds, |s| s.test.map(|d| d.single)),
        test_vote: median_of(&seeds, |s| s.test.map(|d| d.vote)),
        test_entropy: median_of(&seeds, |s| s.test_entropy),
        baseline_dev: median_of(&seeds, |s| s.baseline.as_ref().map(|b| b.dev_f1)),
        baseline_test: median_of(&seeds, |s| s.baseline.as_ref().and_then(|b| b.test_f1)),
        baseline_test_entropy: median_of(&seeds, |s| {
            s.baseline.as_ref().and_then(|b| b.test_entropy)
        }),
    };
    TrainSummary {
        config_hash,
        failed: seeds.iter().filter(|s| !s.ok).count(),
        seeds,
        median,
    }
}

fn write_seed_artifacts(dir: &Path, run: &SeedRun) -> Result<()> {
    create_dir(dir)?;
    if let Some(o) = &run.outcome {
        write_file(&dir.join("metrics.jsonl"), &o.log_jsonl()?)?;
        for (i, r) in o.best.replicas.iter().enumerate() {
            Checkpoint {
                model: r.model.clone(),
                optimizer: r.optimizer.clone(),
            }
            .save(&dir.join(format!("checkpoint_{i}.json")))?;
        }
    }
    if let Some(b) = &run.baseline {
        write_file(&dir.join("baseline_metrics.jsonl"), &b.log_jsonl()?)?;
    }
    Ok(())
}

fn train_into(dir: &Path, data: &Datasets, cfg: &ExperimentConfig) -> Result<TrainSummary> {
    create_dir(dir)?;
    let runs = run_seeds(data, &cfg.train, cfg.seeds, cfg.baseline);
    for (k, run) in runs.iter().enumerate() {
        write_seed_artifacts(&dir.join(format!("seed_{k}")), run)?;
    }
    let summary = summarize(cfg.hash(), runs.into_iter().map(|r| r.result).collect());
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Trains every seed, writing logs, best checkpoints, and `summary.json`.
/// Fails only when every seed failed.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let data = prepare_datasets(cfg)?;
    let summary = train_into(&cfg.out_dir, &data, cfg)?;
    if summary.failed == summary.seeds.len() {
        return Err(Error::Diverged {
            step: 0,
            message: format!(
                "all {} seeds failed; first error: {}",
                summary.failed,
                summary.seeds[0].error.as_deref().unwrap_or("unknown")
            ),
        });
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateReport {
    pub single: Vec<crate::metrics::EvalReport>,
    pub vote: crate::metrics::EvalReport,
}

/// Scores saved checkpoints on a dataset, per replica and as a soft vote.
pub fn cmd_evaluate(
    checkpoints: &[PathBuf],
    dataset: &Path,
    negative_class: Option<usize>,
) -> Result<EvaluateReport> {
    if checkpoints.is_empty() {
        return Err(Error::Validation("no checkpoints given".into()));
    }
    let models = checkpoints
        .iter()
        .map(|p| Checkpoint::load(p).map(|c| c.model))
        .collect::<Result<Vec<_>>>()?;
    let data = data::load(dataset)?;
    let e = trainer::evaluate(&models, &data, negative_class)?;
    Ok(EvaluateReport {
        single: e.replicas,
        vote: e.vote,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub temperature: f64,
    pub alpha: f64,
    pub beta: f64,
    pub flip_rate: f64,
    pub replicas: usize,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub median: Medians,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config_hash: String,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(
            "temperature,alpha,beta,flip_rate,replicas,status,median_dev_vote,median_test_single,median_test_vote,median_baseline_test\n",
        );
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                c.temperature,
                c.alpha,
                c.beta,
                c.flip_rate,
                c.replicas,
                if c.ok { "ok" } else { "failed" },
                fmt(c.median.dev_vote),
                fmt(c.median.test_single),
                fmt(c.median.test_vote),
                fmt(c.median.baseline_test),
            );
        }
        out
    }
}

fn axis<T: Copy>(name: &str, values: &Option<Vec<T>>, base: T) -> Result<Vec<T>> {
    match values {
        None => Ok(vec![base]),
        Some(v) if v.is_empty() => Err(Error::Validation(format!("sweep axis {name} is empty"))),
        Some(v) => Ok(v.clone()),
    }
}

/// One sweep cell: (temperature, alpha, beta, flip_rate, replicas).
pub type GridPoint = (f64, f64, f64, f64, usize);

/// The cross product of the sweep axes, in row-major order.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Result<Vec<GridPoint>> {
    let grid = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Validation("sweep needs a sweep section".into()))?;
    let base_rho = cfg.noise.map_or(0.0, |n| n.flip_rate);
    let ts = axis(
        "temperature",
        &grid.temperature,
        cfg.train.temperature.value(),
    )?;
    let als = axis("alpha", &grid.alpha, cfg.train.alpha)?;
    let bes = axis("beta", &grid.beta, cfg.train.beta)?;
    let rhos = axis("flip_rate", &grid.flip_rate, base_rho)?;
    let ns = axis("replicas", &grid.replicas, cfg.train.replicas)?;
    let mut cells = Vec::new();
    for &t in &ts {
        for &a in &als {
            for &b in &bes {
                for &r in &rhos {
                    for &n in &ns {
                        cells.push((t, a, b, r, n));
                    }
                }
            }
        }
    }
    Ok(cells)
}

/// Runs [`cmd_train`] for every grid cell, sequentially, and tabulates the
/// medians as `sweep.csv` and `sweep.json`. Fails only when every cell failed.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let cells = sweep_cells(cfg)?;
    let clean = clean_datasets(cfg)?;
    create_dir(&cfg.out_dir)?;
    let noise_seed = cfg.noise.map_or(0, |n| n.seed);
    let mut rows = Vec::with_capacity(cells.len());
    for (i, &(t, a, b, rho, n)) in cells.iter().enumerate() {
        let cell_cfg = ExperimentConfig {
            out_dir: cfg.out_dir.join(format!("cell_{i}")),
            noise: Some(NoiseSpec {
                flip_rate: rho,
                seed: noise_seed,
            }),
            sweep: None,
            train: TrainConfig {
                temperature: Temperature::new(t).unwrap_or(cfg.train.temperature),
                alpha: a,
                beta: b,
                replicas: n,
                ..cfg.train.clone()
            },
            ..cfg.clone()
        };
        let outcome = Temperature::new(t)
            .and_then(|_| cell_cfg.validate())
            .and_then(|_| {
                let mut data = clean.clone();
                data.train =
                    data::inject_noise(&data.train, cell_cfg.noise.as_ref().expect("set above"))?;
                train_into(&cell_cfg.out_dir, &data, &cell_cfg)
            });
        rows.push(match outcome {
            Ok(s) if s.failed < s.seeds.len() => SweepCell {
                temperature: t,
                alpha: a,
                beta: b,
                flip_rate: rho,
                replicas: n,
                ok: true,
                error: None,
                median: s.median,
            },
            Ok(s) => SweepCell {
                temperature: t,
                alpha: a,
                beta: b,
                flip_rate: rho,
                replicas: n,
                ok: false,
                error: s.seeds.iter().find_map(|r| r.error.clone()),
                median: s.median,
            },
            Err(e) => SweepCell {
                temperature: t,
                alpha: a,
                beta: b,
                flip_rate: rho,
                replicas: n,
                ok: false,
                error: Some(e.to_string()),
                median: Medians::default(),
            },
        });
    }
    let report = SweepReport {
        config_hash: cfg.hash(),
        cells: rows,
    };
    write_file(&cfg.out_dir.join("sweep.csv"), &report.to_csv())?;
    write_json(&cfg.out_dir.join("sweep.json"), &report)?;
    if report.cells.iter().all(|c| !c.ok) {
        return Err(Error::Diverged {
            step: 0,
            message: "every sweep cell failed".into(),
        });
    }
    Ok(report)
}
