//! Alternating restorer/localizer training: prints which modules each epoch
//! touched and compares localization with and without the restorer.
//!
//! cargo run --release --example reloc_training

use tamperloc::dataio::{split_samples, synth_samples, SynthConfig};
use tamperloc::experiment::{evaluate_samples, ToyConfig};
use tamperloc::inference::{Pipeline, WindowSpec};
use tamperloc::metrics::Situation;
use tamperloc::nets::Network;
use tamperloc::training::{pretrain_plain, TrainConfig, TrainMode, Trainer};

fn main() -> tamperloc::Result<()> {
    let all = synth_samples(60, 64, 5, &SynthConfig::default())?;
    let (train, test) = split_samples(&all, 0.8, 5)?;
    let base = ToyConfig::default().train;
    let plain = pretrain_plain(
        &train,
        &TrainConfig {
            epochs: 8,
            ..base.clone()
        },
    )?;
    let init = plain.localizer_checkpoint(base.seed)?;

    let cfg = TrainConfig {
        mode: TrainMode::RelocAlternate,
        epochs: 8,
        ..base
    };
    let mut trainer = Trainer::new(cfg, &train, Some(&init))?;
    while !trainer.is_finished() {
        let log = trainer.run_epoch()?;
        let vals: Vec<String> = log
            .val_losses
            .iter()
            .map(|(k, v)| format!("val_{k} {v:.4}"))
            .collect();
        println!(
            "epoch {}: updated {:?}; {}",
            log.epoch,
            log.updated_modules,
            vals.join(", ")
        );
    }
    let outcome = trainer.finish();
    let restorer = outcome
        .restorer
        .ok_or_else(|| tamperloc::Error::InvalidArgument("no restorer".into()))?;

    let window = WindowSpec::new(64, 64)?;
    let before = Pipeline::new(plain.localizer, None, window);
    let after = Pipeline::new(outcome.localizer.duplicate()?, Some(restorer), window);
    let f1_before =
        evaluate_samples(&before, &test, Situation::PlainOnDistorted, Some(75))?.mean_f1;
    let f1_after = evaluate_samples(&after, &test, Situation::RelocOnDistorted, Some(75))?.mean_f1;
    println!("mean F1 at QF 75: plain-trained {f1_before:.4}, restorer + localizer {f1_after:.4}");
    Ok(())
}
