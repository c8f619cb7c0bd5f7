//! Trains a restorer briefly and restores a compressed image window by
//! window, reporting the error to the uncompressed original.
//!
//! cargo run --release --example restore_images [out_dir]

use std::path::PathBuf;

use tamperloc::dataio::{jpeg_distort, synth_samples, SynthConfig};
use tamperloc::experiment::ToyConfig;
use tamperloc::inference::{sliding_window_restore, WindowSpec};
use tamperloc::training::{pretrain_plain, train_reloc, TrainConfig};

fn main() -> tamperloc::Result<()> {
    let out = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("tamperloc_restore"),
        PathBuf::from,
    );
    std::fs::create_dir_all(&out).map_err(|e| tamperloc::Error::io(&out, e))?;
    let train = synth_samples(40, 64, 11, &SynthConfig::default())?;
    let cfg = TrainConfig {
        epochs: 6,
        ..ToyConfig::default().train
    };
    let init = pretrain_plain(&train, &cfg)?.localizer_checkpoint(cfg.seed)?;
    let outcome = train_reloc(&init, &train, &cfg)?;
    let restorer = outcome
        .restorer
        .ok_or_else(|| tamperloc::Error::InvalidArgument("no restorer".into()))?;

    let original = synth_samples(1, 160, 99, &SynthConfig::default())?
        .remove(0)
        .plain;
    let compressed = jpeg_distort(&original, 75)?;
    let restored = sliding_window_restore(&restorer, &compressed, &WindowSpec::new(64, 32)?)?;
    println!(
        "mean absolute error to the original: compressed {:.5}, restored {:.5}",
        original.mean_abs_diff(&compressed)?,
        original.mean_abs_diff(&restored)?
    );
    for (name, img) in [
        ("original", &original),
        ("compressed", &compressed),
        ("restored", &restored),
    ] {
        img.write_png(&out.join(format!("{name}.png")))?;
    }
    println!("images in {}", out.display());
    Ok(())
}
