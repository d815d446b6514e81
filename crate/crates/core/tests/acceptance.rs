//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always print:
//!
//!     cargo test --release --test acceptance
//!
//! The report is the result: a failing criterion prints `[FAIL]` but the
//! process still exits 0 so the rest of the test run is unaffected. Set
//! `TIERA_ACCEPTANCE_STRICT=1` to exit non-zero on any failure.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use tiera::data::{
    self, generate_mixture, inject_noise, split, MixtureSpec, NoiseSpec, Priors, Splits,
};
use tiera::ensemble::soft_vote;
use tiera::experiment::{self, median, run_seeds, Datasets, ExperimentConfig, SeedRun};
use tiera::math::{temp_softmax, Logits, Temperature};
use tiera::model::{Checkpoint, ModelKind};
use tiera::trainer::{joint_step, sample_batch, train, warmup_step, TrainConfig, TrainState};

/// Outcome of one criterion: whether it held, plus a one-line detail.
struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn run(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let took = start.elapsed();
    let in_time = took <= budget;
    let pass = v.pass && in_time;
    println!(
        "[{}] {id}. {name}: {} ({:.1}s of {:.0}s){}",
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        took.as_secs_f64(),
        budget.as_secs_f64(),
        if in_time { "" } else { " over budget" },
    );
    pass
}

// 1 -------------------------------------------------------------------------

fn temperature_example() -> Verdict {
    let l = Logits::new(vec![0.6, 0.4]).unwrap();
    let sharp = temp_softmax(&l, Temperature::new(0.2).unwrap());
    let plain = temp_softmax(&l, Temperature::ONE);
    let close = |p: &[f64], want: [f64; 2]| p.iter().zip(want).all(|(a, b)| (a - b).abs() <= 0.005);
    verdict(
        close(sharp.as_slice(), [0.73, 0.27]) && close(plain.as_slice(), [0.55, 0.45]),
        format!(
            "T=0.2 -> ({:.4}, {:.4}), T=1 -> ({:.4}, {:.4})",
            sharp.as_slice()[0],
            sharp.as_slice()[1],
            plain.as_slice()[0],
            plain.as_slice()[1]
        ),
    )
}

// 2 -------------------------------------------------------------------------

fn gradients() -> Verdict {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in [2, 3] {
        for k in [2, 5, 10] {
            for t in [0.2, 0.5, 1.0] {
                for alpha in [0.0, 1e-3, 5e-2] {
                    for beta in [0.0, 5.0, 10.0] {
                        worst = worst.max(common::check_objective(&mut rng, n, k, t, alpha, beta));
                        cases += 1;
                    }
                }
            }
        }
    }
    for kind in [ModelKind::Linear, ModelKind::Mlp] {
        for _ in 0..50 {
            worst = worst.max(common::check_backward(&mut rng, kind));
            cases += 1;
        }
    }
    verdict(
        worst < common::REL_TOL && cases >= 100,
        format!("{cases} cases, worst relative error {worst:.2e}"),
    )
}

// 3 -------------------------------------------------------------------------

fn small_task() -> Splits {
    let spec = MixtureSpec::random(4, 6, Priors::Uniform, 1.0, 1.0, 400, 31);
    split(&generate_mixture(&spec).unwrap(), (0.7, 0.15, 0.15), 31).unwrap()
}

fn reductions() -> Verdict {
    let s = small_task();
    let base = TrainConfig {
        steps: 60,
        batch_size: 16,
        eval_every: 20,
        hidden_width: 8,
        ..TrainConfig::default()
    };

    // (a) beta = 0: a joint step is a warm-up step
    let c = TrainConfig {
        beta: 0.0,
        ..base.clone()
    };
    let mut a = TrainState::new(&c, &s.train).unwrap();
    let mut b = a.clone();
    let mut same_a = true;
    for _ in 0..20 {
        let batch = sample_batch(&s.train, c.batch_size, &mut a.sampler).unwrap();
        b.sampler = a.sampler.clone();
        let ra = joint_step(&mut a, &batch, &c).unwrap();
        let rb = warmup_step(&mut b, &batch, &c).unwrap();
        let totals = |r: &tiera::trainer::StepReport| {
            r.losses
                .iter()
                .map(|l| l.total.to_bits())
                .collect::<Vec<_>>()
        };
        same_a &= a.replicas == b.replicas && totals(&ra) == totals(&rb);
    }

    // (b) identical replicas: no co-regularization, and nothing to pull on
    let mut a = TrainState::new(&base, &s.train).unwrap();
    a.replicas[1] = a.replicas[0].clone();
    let mut b = a.clone();
    let batch = sample_batch(&s.train, base.batch_size, &mut a.sampler).unwrap();
    let ra = joint_step(&mut a, &batch, &base).unwrap();
    warmup_step(&mut b, &batch, &base).unwrap();
    let same_b = ra.co_regularization == 0.0 && a.replicas == b.replicas;

    // (c) alpha = beta = 0, T = 1 is ordinary cross-entropy training
    let plain = TrainConfig {
        temperature: Temperature::ONE,
        alpha: 0.0,
        beta: 0.0,
        ..base
    };
    let out = train(&s.train, &s.dev, &plain).unwrap();
    let same_c = (0..plain.replicas).all(|r| {
        out.replicas[r].model.params == *common::plain_trainer(&s.train, &plain, r).last().unwrap()
    });

    verdict(
        same_a && same_b && same_c,
        format!("beta=0 joint==warm-up {same_a}; identical replicas L_ct=0 {same_b}; plain CE trace {same_c}"),
    )
}

// 4, 5, 7: the noisy mixture task ----------------------------------------------

const DATA_SEED: u64 = 77;
const NOISE_SEED: u64 = 5;
const SEEDS: usize = 5;

fn noisy_task() -> Splits {
    let spec = MixtureSpec::random(5, 20, Priors::Uniform, 0.5, 1.0, 3000, DATA_SEED);
    let s = split(
        &generate_mixture(&spec).unwrap(),
        (2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0),
        DATA_SEED,
    )
    .unwrap();
    assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (2000, 500, 500));
    s
}

fn tierv() -> TrainConfig {
    TrainConfig {
        temperature: Temperature::new(0.5).unwrap(),
        alpha: 1e-3,
        beta: 5.0,
        warmup_fraction: 0.3,
        replicas: 2,
        steps: 3000,
        batch_size: 32,
        learning_rate: 1e-3,
        eval_every: 50,
        model: ModelKind::Mlp,
        hidden_width: 32,
        ..TrainConfig::default()
    }
}

fn at_rate(s: &Splits, rho: f64) -> Datasets {
    Datasets {
        train: inject_noise(
            &s.train,
            &NoiseSpec {
                flip_rate: rho,
                seed: NOISE_SEED,
            },
        )
        .unwrap(),
        dev: s.dev.clone(),
        test: Some(s.test.clone()),
    }
}

fn medians(runs: &[SeedRun], f: impl Fn(&SeedRun) -> Option<f64>) -> (f64, Vec<f64>) {
    let vals: Vec<f64> = runs.iter().filter_map(f).collect();
    assert_eq!(vals.len(), runs.len(), "a seed failed");
    (median(&vals).unwrap(), vals)
}

fn vote_f1(r: &SeedRun) -> Option<f64> {
    r.result.test.map(|t| t.vote)
}

fn baseline_f1(r: &SeedRun) -> Option<f64> {
    r.result.baseline.as_ref().and_then(|b| b.test_f1)
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] > w[1])
}

fn noise_robustness(s: &Splits, at_03: &mut Option<Vec<SeedRun>>) -> Verdict {
    let mut tier = Vec::new();
    let mut plain = Vec::new();
    let mut lines = Vec::new();
    for rho in [0.1, 0.3, 0.5] {
        let runs = run_seeds(&at_rate(s, rho), &tierv(), SEEDS, true);
        let (t, tv) = medians(&runs, vote_f1);
        let (p, pv) = medians(&runs, baseline_f1);
        lines.push(format!(
            "rho {rho}: TIERV {t:.3} {tv:.3?} vs plain {p:.3} {pv:.3?}"
        ));
        tier.push(t);
        plain.push(p);
        if rho == 0.3 {
            *at_03 = Some(runs);
        }
    }
    for l in &lines {
        println!("      {l}");
    }
    let wins = tier.iter().zip(&plain).all(|(t, p)| t > p);
    verdict(
        wins && strictly_decreasing(&tier) && strictly_decreasing(&plain),
        format!(
            "TIERV > plain at every rate: {wins}; TIERV {tier:.3?} and plain {plain:.3?} decreasing: {} / {}",
            strictly_decreasing(&tier),
            strictly_decreasing(&plain)
        ),
    )
}

fn entropy_regularization(s: &Splits, at_03: &[SeedRun]) -> Verdict {
    let data = at_rate(s, 0.3);
    let with = TrainConfig {
        alpha: 5e-2,
        ..tierv()
    };
    let without = TrainConfig {
        alpha: 0.0,
        ..tierv()
    };
    let entropy = |r: &SeedRun| r.result.test_entropy;
    let (h_with, _) = medians(&run_seeds(&data, &with, SEEDS, false), entropy);
    let (h_without, _) = medians(&run_seeds(&data, &without, SEEDS, false), entropy);

    // the plain baseline grows more confident on its training data
    let epoch_drop: Vec<(f64, f64)> = at_03
        .iter()
        .map(|r| {
            let e = &r.baseline.as_ref().expect("baseline ran").epochs;
            (e[0].mean_entropy_t1, e[e.len() - 1].mean_entropy_t1)
        })
        .collect();
    let (first, _) = median_pair(&epoch_drop, 0);
    let (last, _) = median_pair(&epoch_drop, 1);
    let higher = h_with > h_without;
    let drops = last < first;
    verdict(
        higher && drops,
        format!(
            "test entropy alpha=5e-2 {h_with:.4} vs alpha=0 {h_without:.4}; plain train entropy epoch 1 {first:.4} -> final {last:.4}"
        ),
    )
}

fn median_pair(pairs: &[(f64, f64)], which: usize) -> (f64, Vec<f64>) {
    let v: Vec<f64> = pairs
        .iter()
        .map(|p| if which == 0 { p.0 } else { p.1 })
        .collect();
    (median(&v).unwrap(), v)
}

fn extra_copies(s: &Splits, at_03: &[SeedRun]) -> Verdict {
    let (two, _) = medians(at_03, vote_f1);
    let three_cfg = TrainConfig {
        replicas: 3,
        ..tierv()
    };
    let (three, tv) = medians(
        &run_seeds(&at_rate(s, 0.3), &three_cfg, SEEDS, false),
        vote_f1,
    );
    verdict(
        three >= two - 0.005,
        format!("n=3 {three:.3} {tv:.3?} vs n=2 {two:.3} (allowed drop 0.005)"),
    )
}

// 6 -------------------------------------------------------------------------

fn vote_invariances() -> Verdict {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(6);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let wrap = |ls: &[Vec<f64>]| {
        ls.iter()
            .map(|l| Logits::new(l.clone()).unwrap())
            .collect::<Vec<_>>()
    };
    let (mut scale_ok, mut perm_ok, mut relabel_ok) = (true, true, true);
    let mut worst_scale: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..6);
        let k = rng.gen_range(2..10);
        let ls: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| rng.gen_range(-20.0..20.0)).collect())
            .collect();
        let base = soft_vote(&wrap(&ls)).unwrap();

        // rescale one replica: by a power of two the sum is unchanged to the
        // bit; by an arbitrary factor only rounding can differ
        let i = rng.gen_range(0..n);
        for c in [2f64.powi(rng.gen_range(-30..30)), rng.gen_range(1e-3..1e3)] {
            let mut scaled = ls.clone();
            scaled[i].iter_mut().for_each(|v| *v *= c);
            let v = soft_vote(&wrap(&scaled)).unwrap();
            let diff = base
                .combined
                .iter()
                .zip(&v.combined)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if c.log2().fract() == 0.0 {
                scale_ok &= bits(&v.combined) == bits(&base.combined);
            } else {
                worst_scale = worst_scale.max(diff);
            }
            scale_ok &= v.predicted == base.predicted;
        }

        let mut order: Vec<usize> = (0..n).collect();
        for j in (1..n).rev() {
            order.swap(j, rng.gen_range(0..=j));
        }
        let shuffled: Vec<Vec<f64>> = order.iter().map(|&j| ls[j].clone()).collect();
        let v = soft_vote(&wrap(&shuffled)).unwrap();
        perm_ok &= bits(&v.combined) == bits(&base.combined) && v.predicted == base.predicted;

        let mut perm: Vec<usize> = (0..k).collect();
        for j in (1..k).rev() {
            perm.swap(j, rng.gen_range(0..=j));
        }
        let relabel = |l: &[f64]| {
            let mut out = vec![0.0; k];
            for c in 0..k {
                out[perm[c]] = l[c];
            }
            out
        };
        let moved: Vec<Vec<f64>> = ls.iter().map(|l| relabel(l)).collect();
        let v = soft_vote(&wrap(&moved)).unwrap();
        relabel_ok &= bits(&v.combined) == bits(&relabel(&base.combined))
            && v.predicted == perm[base.predicted];
    }
    scale_ok &= worst_scale <= 1e-13;
    let tie = soft_vote(&wrap(&[vec![2.0, 0.0], vec![0.0, 1.0]])).unwrap();
    let tie_ok = tie.predicted == 0 && tie.combined == [1.0, 1.0];
    verdict(
        scale_ok && perm_ok && relabel_ok && tie_ok,
        format!(
            "1000 instances: rescaling {scale_ok} (worst non-dyadic drift {worst_scale:.1e}), replica order {perm_ok}, class relabeling {relabel_ok}; (2,0),(0,1) -> class {}",
            tie.predicted
        ),
    )
}

// 8 -------------------------------------------------------------------------

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let config = |out: &Path| -> ExperimentConfig {
        serde_json::from_value(serde_json::json!({
            "out_dir": out,
            "mixture": {"num_classes": 4, "feature_dim": 6, "separation": 1.0, "spread": 1.0, "count": 600, "seed": 3},
            "noise": {"flip_rate": 0.3, "seed": 4},
            "steps": 200,
            "eval_every": 25,
            "seeds": 2,
            "baseline": true,
        }))
        .unwrap()
    };
    let read = |p: &Path| std::fs::read(p).unwrap();
    let a = tmp.path().join("a");
    let files = [
        "seed_0/metrics.jsonl",
        "seed_1/metrics.jsonl",
        "seed_1/baseline_metrics.jsonl",
        "summary.json",
    ];
    experiment::cmd_train(&config(&a)).unwrap();
    let first: Vec<Vec<u8>> = files.iter().map(|f| read(&a.join(f))).collect();
    experiment::cmd_train(&config(&a)).unwrap();
    let logs_same = files
        .iter()
        .zip(&first)
        .all(|(f, bytes)| read(&a.join(f)) == *bytes);

    let ck_path = a.join("seed_0/checkpoint_1.json");
    let ck = Checkpoint::load(&ck_path).unwrap();
    let resaved = tmp.path().join("ck.json");
    ck.save(&resaved).unwrap();
    let ck_same = read(&ck_path) == read(&resaved) && Checkpoint::load(&resaved).unwrap() == ck;

    let d = inject_noise(
        &noisy_task().train,
        &NoiseSpec {
            flip_rate: 0.3,
            seed: 1,
        },
    )
    .unwrap();
    let path = tmp.path().join("d.jsonl");
    data::save(&d, &path).unwrap();
    let back = data::load(&path).unwrap();
    let feature_bits = |d: &data::Dataset| -> Vec<u64> {
        d.examples
            .iter()
            .flat_map(|e| e.features.iter().map(|f| f.to_bits()))
            .collect()
    };
    let data_same = back == d && feature_bits(&back) == feature_bits(&d);

    verdict(
        logs_same && ck_same && data_same,
        format!("byte-identical logs {logs_same}; checkpoint round-trip {ck_same}; dataset round-trip {data_same}"),
    )
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut passed = Vec::new();
    passed.push(run(
        1,
        "temperature worked example",
        secs(1),
        temperature_example,
    ));
    passed.push(run(2, "gradient correctness", secs(10), gradients));
    passed.push(run(3, "reduction identities", secs(10), reductions));

    let task = noisy_task();
    let mut at_03 = None;
    let start = Instant::now();
    passed.push(run(4, "noise robustness", secs(300), || {
        noise_robustness(&task, &mut at_03)
    }));
    let at_03 = at_03.expect("rho 0.3 runs");
    // shares criterion 4's budget
    let left = secs(300).saturating_sub(start.elapsed());
    passed.push(run(5, "entropy regularization", left, || {
        entropy_regularization(&task, &at_03)
    }));
    passed.push(run(6, "soft-vote invariances", secs(5), vote_invariances));
    passed.push(run(7, "extra copies", secs(300), || {
        extra_copies(&task, &at_03)
    }));
    passed.push(run(8, "determinism and round-trips", secs(30), determinism));

    let n_pass = passed.iter().filter(|&&p| p).count();
    println!("acceptance: {n_pass}/{} criteria passed", passed.len());
    let strict = std::env::var("TIERA_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && n_pass < passed.len() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
