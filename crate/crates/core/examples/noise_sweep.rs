//! Median test F1 over five seeds as the training-label flip rate grows,
//! for the soft-voted pair and for plain cross-entropy training.
//!
//! cargo run --release --example noise_sweep -- [steps]

use tiera::data::{generate_mixture, split, MixtureSpec, NoiseSpec, Priors};
use tiera::experiment::{run_seeds, summarize, Datasets};
use tiera::trainer::TrainConfig;

fn main() -> tiera::Result<()> {
    let steps = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1000);
    let spec = MixtureSpec::random(5, 20, Priors::Uniform, 0.5, 1.0, 3000, 2024);
    let s = split(
        &generate_mixture(&spec)?,
        (2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0),
        7,
    )?;
    let cfg = TrainConfig {
        steps,
        ..TrainConfig::default()
    };

    println!("{:>5} {:>8} {:>8} {:>8}", "rho", "vote", "single", "plain");
    for rho in [0.0, 0.1, 0.3, 0.5, 0.7] {
        let data = Datasets {
            train: tiera::data::inject_noise(
                &s.train,
                &NoiseSpec {
                    flip_rate: rho,
                    seed: 1,
                },
            )?,
            dev: s.dev.clone(),
            test: Some(s.test.clone()),
        };
        let runs = run_seeds(&data, &cfg, 5, true);
        let m = summarize(String::new(), runs.into_iter().map(|r| r.result).collect()).median;
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{rho:>5} {:>8} {:>8} {:>8}",
            f(m.test_vote),
            f(m.test_single),
            f(m.baseline_test)
        );
    }
    Ok(())
}
