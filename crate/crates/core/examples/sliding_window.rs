//! Tiles a large image into fixed windows, stitches the prediction and writes
//! the probability map, binary mask and a JSON sidecar.
//!
//! cargo run --release --example sliding_window [out_dir]

use std::path::PathBuf;

use tamperloc::dataio::{synth_samples, SynthConfig};
use tamperloc::inference::{tile_origins, Pipeline, WindowSpec};
use tamperloc::nets::{LocalizationConfig, LocalizationNet, Network};

fn main() -> tamperloc::Result<()> {
    let out = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("tamperloc_window"),
        PathBuf::from,
    );
    let image = synth_samples(1, 600, 1, &SynthConfig::default())?
        .remove(0)
        .plain;
    let spec = WindowSpec::default();
    println!(
        "{}x{} image, window {} stride {}: rows {:?}, cols {:?}",
        image.height(),
        image.width(),
        spec.window,
        spec.stride,
        tile_origins(image.height(), spec.window, spec.stride),
        tile_origins(image.width(), spec.window, spec.stride)
    );
    let localizer = LocalizationNet::new(LocalizationConfig::default(), 0)?;
    let pipeline = Pipeline::new(localizer, None, spec);
    let result = pipeline.predict(&image)?;
    println!("{} windows in {:.0} ms", result.windows, result.elapsed_ms);
    for path in result.write_outputs(&out, "large", pipeline.threshold)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
