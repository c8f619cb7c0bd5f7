//! Samples original and tampered pixels, reads the localizer's encoder
//! features and measures how far apart the two clouds are on plain and on
//! compressed inputs. Writes the 2-D scatter as CSV.
//!
//! cargo run --release --example feature_separability [out_dir]

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tamperloc::dataio::{jpeg_distort, split_samples, synth_samples, Image, Mask, SynthConfig};
use tamperloc::experiment::ToyConfig;
use tamperloc::metrics::analyze_separability;
use tamperloc::training::{pretrain_plain, TrainConfig};

fn main() -> tamperloc::Result<()> {
    let out = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("tamperloc_features"),
        PathBuf::from,
    );
    std::fs::create_dir_all(&out).map_err(|e| tamperloc::Error::io(&out, e))?;
    let all = synth_samples(60, 64, 9, &SynthConfig::default())?;
    let (train, test) = split_samples(&all, 0.8, 9)?;
    let cfg = TrainConfig {
        epochs: 8,
        ..ToyConfig::default().train
    };
    let model = pretrain_plain(&train, &cfg)?.localizer;

    let plain: Vec<Image> = test.iter().map(|s| s.plain.clone()).collect();
    let compressed = test
        .iter()
        .map(|s| jpeg_distort(&s.plain, 75))
        .collect::<tamperloc::Result<Vec<Image>>>()?;
    for (name, images) in [("plain", &plain), ("qf75", &compressed)] {
        let inputs: Vec<(&Image, &Mask)> =
            images.iter().zip(test.iter().map(|s| &s.mask)).collect();
        let res = analyze_separability(&model, &inputs, 1000, &mut ChaCha8Rng::seed_from_u64(0))?;
        let path = out.join(format!("{name}_scatter.csv"));
        res.write_scatter_csv(&path)?;
        println!(
            "{name}: EMD {:.4} (standardized {:.4}) over {}+{} pixels; scatter in {}",
            res.emd,
            res.emd_standardized,
            res.n_original,
            res.n_tampered,
            path.display()
        );
    }
    Ok(())
}
