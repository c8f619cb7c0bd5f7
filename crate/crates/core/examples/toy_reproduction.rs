//! Trains every regime on the default toy corpus and prints the comparison.
//!
//! cargo run --release --example toy_reproduction [results.json]

use tamperloc::experiment::{run_toy, ToyConfig};

fn main() -> tamperloc::Result<()> {
    let cfg = ToyConfig::default();
    let results = run_toy(&cfg, &mut |line| eprintln!("{line}"))?;
    println!("train/test images: {}/{}", results.n_train, results.n_test);
    println!("QF {} mean F1", cfg.fixed_qf);
    println!("  M^P{{I^P}}        {:.4}", results.plain_on_plain);
    println!("  M^P{{I^D}}        {:.4}", results.plain_on_distorted);
    println!("  M^D|P{{I^D}}      {:.4}", results.finetuned_on_distorted);
    println!("  M^ReLoc{{I^D}}    {:.4}", results.reloc_on_distorted);
    println!("  run B M^P{{I^D}}  {:.4}", results.plain_b_on_distorted);
    println!("  A's R + B's M^P  {:.4}", results.transfer_on_distorted);
    println!("feature EMD (raw / standardized)");
    for row in &results.separability {
        println!(
            "  {:<16} {:.4}  {:.4}",
            row.situation.to_string(),
            row.emd,
            row.emd_standardized
        );
    }
    println!(
        "MAE to plain: distorted {:.5}, restored {:.5}",
        results.distorted_mae, results.restored_mae
    );
    println!("validation L_L per localizer pass (alternate / joint)");
    for (k, (a, j)) in results
        .alternate_val_loc
        .iter()
        .zip(&results.joint_val_loc)
        .enumerate()
    {
        println!("  {:>2}  {a:.4}  {j:.4}", k + 1);
    }
    println!("uniform({}, {}) regime", cfg.uniform_qf.0, cfg.uniform_qf.1);
    for row in &results.multi_qf {
        println!(
            "  QF{:<3} M^P {:.4}  M^D|P {:.4}  M^ReLoc {:.4}",
            row.qf, row.plain, row.finetuned, row.reloc
        );
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, serde_json::to_string_pretty(&results)?)
            .map_err(|e| tamperloc::Error::io(&path, e))?;
    }
    Ok(())
}
