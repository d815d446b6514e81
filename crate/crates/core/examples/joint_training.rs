//! Train two replicas jointly on noisy labels and print the training log:
//! independent warm-up first, then KL co-regularization toward their
//! averaged prediction.
//!
//! cargo run --release --example joint_training

use tiera::data::{generate_mixture, inject_noise, split, MixtureSpec, NoiseSpec, Priors};
use tiera::trainer::{evaluate, train, LogRecord, TrainConfig};

fn main() -> tiera::Result<()> {
    let spec = MixtureSpec::random(5, 20, Priors::Uniform, 0.5, 1.0, 3000, 2024);
    let s = split(
        &generate_mixture(&spec)?,
        (2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0),
        7,
    )?;
    let train_set = inject_noise(
        &s.train,
        &NoiseSpec {
            flip_rate: 0.3,
            seed: 1,
        },
    )?;

    let cfg = TrainConfig {
        steps: 1500,
        eval_every: 100,
        ..TrainConfig::default()
    };
    println!("warm-up ends after step {}", cfg.warmup_steps());
    let out = train(&train_set, &s.dev, &cfg)?;
    for record in out.log() {
        match record {
            LogRecord::Epoch(e) => println!(
                "epoch {:>3} (step {:>4}) loss {:.4} entropy@T {:.4} entropy@1 {:.4}",
                e.epoch, e.last_step, e.mean_loss, e.mean_entropy_t, e.mean_entropy_t1
            ),
            LogRecord::Eval(e) => println!(
                "    eval step {:>4} dev F1 {:.4} replicas {:?}",
                e.step, e.f1, e.replica_f1
            ),
            LogRecord::Step(_) => {}
        }
    }

    let best = &out.best;
    let test = evaluate(&best.models(), &s.test, None)?;
    println!("best step {} (dev F1 {:.4})", best.step, best.dev_f1);
    println!(
        "test F1: vote {:.4}, replicas {:?}",
        test.vote.micro_f1,
        test.replicas.iter().map(|r| r.micro_f1).collect::<Vec<_>>()
    );

    let plain = train(&train_set, &s.dev, &cfg.plain_baseline())?;
    let base = evaluate(&plain.best.models(), &s.test, None)?;
    println!(
        "plain cross-entropy test F1 {:.4}",
        base.replicas[0].micro_f1
    );
    Ok(())
}
