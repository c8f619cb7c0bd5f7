//! Writes a small synthetic spliced corpus, splits it and reports how much
//! JPEG compression moves the pixels at a few quality factors.
//!
//! cargo run --release --example synth_corpus [out_dir]

use std::path::PathBuf;

use tamperloc::dataio::{
    jpeg_distort, load_dataset, split_dataset, synth_tamper_dataset, SplitTag,
};

fn main() -> tamperloc::Result<()> {
    let out = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("tamperloc_corpus"),
        PathBuf::from,
    );
    let all = synth_tamper_dataset(20, 96, 7, &out)?;
    let (train, test) = split_dataset(&all, 0.8, 7)?;
    println!(
        "{} images under {}: {} train, {} test",
        all.len(),
        out.display(),
        train.len(),
        test.len()
    );

    let back = load_dataset(&out, SplitTag::All)?;
    let samples = back.load_all()?;
    let tampered: f64 = samples
        .iter()
        .map(|s| s.mask.tampered_fraction())
        .sum::<f64>()
        / samples.len() as f64;
    println!("mean tampered area {:.1}%", tampered * 100.0);
    for qf in [60, 75, 90] {
        let mut mae = 0.0;
        for s in &samples {
            mae += s.plain.mean_abs_diff(&jpeg_distort(&s.plain, qf)?)?;
        }
        println!(
            "QF {qf}: mean absolute change {:.5}",
            mae / samples.len() as f64
        );
    }
    Ok(())
}
