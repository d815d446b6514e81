//! How temperature sharpens or flattens a prediction.
//!
//! cargo run --example temperature_calibration

use tiera::math::{entropy, temp_softmax, Logits, Temperature};

fn main() -> tiera::Result<()> {
    let logits = Logits::new(vec![0.6, 0.4])?;
    println!("logits {:?}", logits.as_slice());
    for t in [0.2, 0.3, 0.5, 0.8, 1.0, 2.0] {
        let p = temp_softmax(&logits, Temperature::new(t)?);
        println!(
            "T={t:<4} p=({:.3}, {:.3})  entropy {:.4}",
            p.as_slice()[0],
            p.as_slice()[1],
            entropy(&p)
        );
    }
    Ok(())
}
