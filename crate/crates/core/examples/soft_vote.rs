//! Normalized soft voting: a confident replica outvotes an unsure one,
//! regardless of how large either replica's raw logits are.
//!
//! cargo run --example soft_vote

use tiera::ensemble::{predict_single, soft_vote};
use tiera::math::Logits;

fn show(name: &str, replicas: &[Vec<f64>]) -> tiera::Result<()> {
    let logits = replicas
        .iter()
        .map(|l| Logits::new(l.clone()))
        .collect::<tiera::Result<Vec<_>>>()?;
    let vote = soft_vote(&logits)?;
    let singles: Vec<usize> = logits.iter().map(predict_single).collect();
    println!("{name}");
    for (l, n) in replicas.iter().zip(&vote.normalized) {
        println!(
            "  {l:?} -> {:?}",
            n.iter()
                .map(|v| (v * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>()
        );
    }
    println!("  combined {:?}", vote.combined);
    println!(
        "  single-replica picks {singles:?}, vote picks {}",
        vote.predicted
    );
    Ok(())
}

fn main() -> tiera::Result<()> {
    show(
        "tie broken toward the lower class",
        &[vec![2.0, 0.0], vec![0.0, 1.0]],
    )?;
    show(
        "confident replica dominates",
        &[vec![10.0, 1.0], vec![0.9, 1.0]],
    )?;
    show(
        "scale does not buy votes",
        &[vec![1000.0, 900.0, 0.0], vec![0.0, 1.0, 0.2]],
    )?;
    Ok(())
}
