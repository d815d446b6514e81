//! Generate a mixture, corrupt its training labels, save everything as JSON
//! Lines and read it back bit-for-bit.
//!
//! cargo run --example dataset_roundtrip -- [out_dir]

use std::path::PathBuf;

use tiera::data::{self, generate_mixture, inject_noise, split, MixtureSpec, NoiseSpec, Priors};

fn main() -> tiera::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("tiera_roundtrip"));
    std::fs::create_dir_all(&dir).map_err(|e| tiera::Error::io(&dir, e))?;

    let spec = MixtureSpec::random(4, 3, Priors::Zipf { exponent: 1.0 }, 1.5, 1.0, 1000, 42);
    let s = split(&generate_mixture(&spec)?, (0.8, 0.1, 0.1), 1)?;
    let noisy = inject_noise(
        &s.train,
        &NoiseSpec {
            flip_rate: 0.3,
            seed: 9,
        },
    )?;
    println!(
        "train class counts, clean {:?} noisy {:?}",
        s.train.class_counts(),
        noisy.class_counts()
    );

    let path = dir.join("train_noisy.jsonl");
    data::save(&noisy, &path)?;
    let back = data::load(&path)?;
    assert_eq!(back, noisy);
    assert_eq!(back.restored(), s.train);
    let flips = data::flip_manifest(&back);
    println!(
        "{} examples, {} flipped, first flip {:?}",
        back.len(),
        flips.len(),
        flips.first()
    );
    println!("wrote {}", path.display());
    Ok(())
}
