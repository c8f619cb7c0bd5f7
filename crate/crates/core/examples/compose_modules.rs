//! Puts the restorer from one training run in front of a localizer trained
//! independently in another run, and compares against that localizer alone.
//!
//! cargo run --release --example compose_modules

use tamperloc::dataio::{jpeg_distort, split_samples, synth_samples, SynthConfig};
use tamperloc::experiment::ToyConfig;
use tamperloc::inference::{compose_modules, Pipeline, WindowSpec};
use tamperloc::metrics::{aggregate, evaluate_image, Situation};
use tamperloc::nets::{LocalizationNet, Network};
use tamperloc::training::{pretrain_plain, train_reloc, TrainConfig};

fn main() -> tamperloc::Result<()> {
    let all = synth_samples(60, 64, 13, &SynthConfig::default())?;
    let (train, test) = split_samples(&all, 0.8, 13)?;
    let base = TrainConfig {
        epochs: 8,
        ..ToyConfig::default().train
    };

    let run_a = pretrain_plain(
        &train,
        &TrainConfig {
            seed: 1,
            ..base.clone()
        },
    )?;
    let reloc = train_reloc(
        &run_a.localizer_checkpoint(1)?,
        &train,
        &TrainConfig {
            seed: 1,
            ..base.clone()
        },
    )?;
    let r_ckpt = reloc
        .restorer_checkpoint(1)?
        .ok_or_else(|| tamperloc::Error::InvalidArgument("no restorer".into()))?;
    let run_b = pretrain_plain(&train, &TrainConfig { seed: 2, ..base })?;
    let l_ckpt = run_b.localizer_checkpoint(2)?;

    let window = WindowSpec::new(64, 64)?;
    let alone = Pipeline::new(LocalizationNet::from_checkpoint(&l_ckpt)?, None, window);
    let (mut solo, mut composed) = (Vec::new(), Vec::new());
    for s in &test {
        let input = jpeg_distort(&s.plain, 75)?;
        let a = alone.predict(&input)?;
        solo.push(evaluate_image(&s.id, &a.prob, &s.mask, alone.threshold)?);
        let c = compose_modules(&r_ckpt, &l_ckpt, &input, &window)?;
        composed.push(evaluate_image(&s.id, &c.prob, &s.mask, alone.threshold)?);
    }
    let solo = aggregate(Situation::PlainOnDistorted, solo)?;
    let composed = aggregate(Situation::RelocOnDistorted, composed)?;
    println!("run B localizer alone:            {}", solo.summary());
    println!("run A restorer + run B localizer: {}", composed.summary());
    Ok(())
}
