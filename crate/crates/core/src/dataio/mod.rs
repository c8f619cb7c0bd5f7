//! Dataset ingestion, synthetic corpora, JPEG degradation, block sampling
//! and splitting.

mod blocks;
mod jpeg;
mod manifest;
mod raster;
mod sample;
mod synth;

pub use blocks::extract_blocks;
pub use jpeg::{encode_jpeg, jpeg_distort, sample_qf, DegradationSpec};
pub use manifest::{
    load_dataset, split_dataset, split_indices, split_samples, train_count, DatasetManifest,
    ManifestEntry, SplitTag, MANIFEST_FILE,
};
pub use raster::{Image, Mask, ProbabilityMap, Role};
pub use sample::Sample;
pub use synth::{
    sample_id, synth_sample, synth_samples, synth_tamper_dataset, synth_tamper_dataset_with,
    SynthConfig, MIN_IMAGE_SIZE,
};
