//! Compares the analytic gradient of the joint objective against central
//! finite differences for one random configuration.
//!
//! cargo run --example gradient_check -- [seed]

use tiera::math::{objective_and_grad, Logits, ObjectiveConfig, Temperature};
use tiera::rng;

fn main() -> tiera::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(7);
    let mut r = rng::seeded(seed);
    let (n, k) = (3, 5);
    let raw: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..k).map(|_| 2.0 * rng::standard_normal(&mut r)).collect())
        .collect();
    let label = rng::index(&mut r, k);
    let cfg = ObjectiveConfig {
        temperature: Temperature::new(0.5)?,
        alpha: 1e-3,
        beta: 5.0,
        joint: true,
    };
    let wrap = |raw: &[Vec<f64>]| -> tiera::Result<Vec<Logits>> {
        raw.iter().map(|l| Logits::new(l.clone())).collect()
    };
    let out = objective_and_grad(&wrap(&raw)?, label, &cfg)?;

    // Each replica's gradient is taken with the soft label held fixed, so
    // differencing the full objective would be wrong; perturb one replica's
    // loss at a time against the frozen target instead.
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for c in 0..k {
            let loss_at = |delta: f64| -> tiera::Result<f64> {
                let mut moved = raw.clone();
                moved[i][c] += delta;
                let o = objective_and_grad(
                    &wrap(&moved)?,
                    label,
                    &ObjectiveConfig { beta: 0.0, ..cfg },
                )?;
                let p = &o.probs[i];
                let kl = tiera::math::kl_div(&out.soft_label, p)?;
                Ok(o.terms[i].total + cfg.beta * kl)
            };
            let fd = (loss_at(h)? - loss_at(-h)?) / (2.0 * h);
            let an = out.grads[i][c];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1.0);
            worst = worst.max(rel);
            println!("replica {i} class {c}: analytic {an:+.8} numeric {fd:+.8}");
        }
    }
    println!("label {label}, worst relative error {worst:.2e}");
    Ok(())
}
