//! Trains a localizer on plain images, fine-tunes it on JPEG-compressed ones,
//! saves both checkpoints and scores them on compressed test images.
//!
//! cargo run --release --example train_localizer [out_dir]

use std::path::PathBuf;

use tamperloc::dataio::{split_samples, synth_samples, SynthConfig};
use tamperloc::experiment::{evaluate_samples, ToyConfig};
use tamperloc::inference::{Pipeline, WindowSpec};
use tamperloc::metrics::Situation;
use tamperloc::nets::save_checkpoint;
use tamperloc::training::{finetune_distorted, pretrain_plain, TrainConfig};

fn main() -> tamperloc::Result<()> {
    let out = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("tamperloc_train"),
        PathBuf::from,
    );
    std::fs::create_dir_all(&out).map_err(|e| tamperloc::Error::io(&out, e))?;
    let all = synth_samples(60, 64, 3, &SynthConfig::default())?;
    let (train, test) = split_samples(&all, 0.8, 3)?;
    let cfg = TrainConfig {
        epochs: 8,
        ..ToyConfig::default().train
    };

    let plain = pretrain_plain(&train, &cfg)?;
    let plain_ckpt = plain.localizer_checkpoint(cfg.seed)?;
    save_checkpoint(&plain_ckpt, &out.join("plain.ckpt"))?;
    let tuned = finetune_distorted(&plain_ckpt, &train, &cfg)?;
    save_checkpoint(
        &tuned.localizer_checkpoint(cfg.seed)?,
        &out.join("finetuned.ckpt"),
    )?;

    let window = WindowSpec::new(64, 64)?;
    for (label, outcome, situation) in [
        ("plain-trained", plain, Situation::PlainOnDistorted),
        ("fine-tuned", tuned, Situation::FinetunedOnDistorted),
    ] {
        let best = outcome.best_epoch;
        let pipeline = Pipeline::new(outcome.localizer, None, window);
        let report = evaluate_samples(&pipeline, &test, situation, Some(75))?;
        println!(
            "{label} (best epoch {best:?}) at QF 75: {}",
            report.summary()
        );
    }
    println!("checkpoints in {}", out.display());
    Ok(())
}
