//! Generable splice corpus.
//!
//! Each image is a smooth random texture carrying faint sensor-like noise.
//! A rectangular patch is cut from a second, unrelated texture and pasted in;
//! the mask marks the patch. The patch carries slightly stronger noise plus a
//! faint pixel-period checkerboard, the kind of periodic residue left by
//! resampling. Both traces are plain to see in lossless files; JPEG
//! quantisation of the highest frequencies attenuates them heavily.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{write_entries, DatasetManifest, ManifestEntry, SplitTag, MANIFEST_FILE};
use super::raster::{Image, Mask, Role};
use super::sample::Sample;
use crate::error::{invalid, Error, Result};

/// Smallest accepted side length.
pub const MIN_IMAGE_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Luminance noise std range of the host image.
    pub host_noise: (f32, f32),
    /// Luminance noise std range of the spliced patch.
    pub patch_noise: (f32, f32),
    /// Amplitude range of the pixel-period checkerboard carried by the patch.
    pub trace_amp: (f32, f32),
    /// Tampered area fraction range.
    pub area: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            host_noise: (0.002, 0.006),
            patch_noise: (0.006, 0.0096),
            trace_amp: (0.015, 0.0225),
            area: (0.05, 0.40),
        }
    }
}

/// Generates one spliced sample. Output depends only on `rng`'s state.
pub fn synth_sample<R: Rng + ?Sized>(
    id: impl Into<String>,
    size: usize,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<Sample> {
    if size < MIN_IMAGE_SIZE {
        return Err(invalid!(
            "image size must be at least {MIN_IMAGE_SIZE}, got {size}"
        ));
    }
    let host = texture(size, rng);
    let donor = texture(size, rng);
    let host_sigma = rng.random_range(cfg.host_noise.0..=cfg.host_noise.1);
    let patch_sigma = rng.random_range(cfg.patch_noise.0..=cfg.patch_noise.1);
    let trace = rng.random_range(cfg.trace_amp.0..=cfg.trace_amp.1);

    let (top, left, ph, pw) = patch_rect(size, cfg.area, rng);
    let mut mask = Mask::zeros(size, size)?;
    let mut data = host;
    for r in top..top + ph {
        for c in left..left + pw {
            mask.set(r, c, true);
            let i = (r * size + c) * 3;
            data[i..i + 3].copy_from_slice(&donor[i..i + 3]);
        }
    }
    let host_noise = Normal::new(0.0, host_sigma).expect("finite sigma");
    let patch_noise = Normal::new(0.0, patch_sigma).expect("finite sigma");
    for r in 0..size {
        for c in 0..size {
            let n = if mask.get(r, c) == 1 {
                let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
                patch_noise.sample(rng) + sign * trace
            } else {
                host_noise.sample(rng)
            };
            let i = (r * size + c) * 3;
            for v in &mut data[i..i + 3] {
                *v += n;
            }
        }
    }
    let plain = Image::from_clamped(size, size, data, Role::Plain)?;
    Sample::new(id, plain, mask)
}

/// `n` samples; sample `i` draws from its own stream of a generator seeded with `seed`.
pub fn synth_samples(n: usize, size: usize, seed: u64, cfg: &SynthConfig) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(invalid!("sample count must be at least 1"));
    }
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            synth_sample(sample_id(i), size, cfg, &mut rng)
        })
        .collect()
}

pub fn sample_id(i: usize) -> String {
    format!("s{i:05}")
}

/// Writes `n` synthetic pairs plus a manifest index under `out_root`.
pub fn synth_tamper_dataset(
    n: usize,
    image_size: usize,
    seed: u64,
    out_root: &Path,
) -> Result<DatasetManifest> {
    synth_tamper_dataset_with(n, image_size, seed, out_root, &SynthConfig::default())
}

pub fn synth_tamper_dataset_with(
    n: usize,
    image_size: usize,
    seed: u64,
    out_root: &Path,
    cfg: &SynthConfig,
) -> Result<DatasetManifest> {
    let samples = synth_samples(n, image_size, seed, cfg)?;
    let manifest = DatasetManifest {
        root: out_root.to_path_buf(),
        entries: samples
            .iter()
            .map(|s| ManifestEntry {
                id: s.id.clone(),
                split: SplitTag::All,
                qf: None,
            })
            .collect(),
        split: SplitTag::All,
        degradation: None,
    };
    for sub in ["images", "masks"] {
        let dir = out_root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for s in &samples {
        s.plain.write_png(&manifest.image_path(&s.id))?;
        s.mask.write_png(&manifest.mask_path(&s.id))?;
    }
    write_entries(&out_root.join(MANIFEST_FILE), &manifest.entries)?;
    Ok(manifest)
}

fn patch_rect<R: Rng + ?Sized>(
    size: usize,
    area: (f64, f64),
    rng: &mut R,
) -> (usize, usize, usize, usize) {
    let total = (size * size) as f64;
    // Aim inside the band so integer rounding cannot leave it.
    let (lo, hi) = (area.0 + 0.01, area.1 - 0.01);
    loop {
        let frac = rng.random_range(lo..=hi);
        let aspect: f64 = rng.random_range(0.6..=1.6);
        let h = ((frac * total * aspect).sqrt().round() as usize).clamp(4, size - 2);
        let w = ((frac * total / h as f64).round() as usize).clamp(4, size - 2);
        let got = (h * w) as f64 / total;
        if got >= area.0 && got <= area.1 {
            let top = rng.random_range(0..=size - h);
            let left = rng.random_range(0..=size - w);
            return (top, left, h, w);
        }
    }
}

/// Smooth color texture in roughly `[0.1, 0.9]`, interleaved RGB.
fn texture<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Vec<f32> {
    let luma = value_noise(size, rng.random_range(2..=6), rng);
    let tints: Vec<Vec<f32>> = (0..3)
        .map(|_| value_noise(size, rng.random_range(1..=3), rng))
        .collect();
    let base: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.3..=0.7));
    let amp = rng.random_range(0.08..=0.18);
    let mut out = Vec::with_capacity(size * size * 3);
    for i in 0..size * size {
        for c in 0..3 {
            out.push(base[c] + amp * luma[i] + 0.05 * tints[c][i]);
        }
    }
    out
}

/// Bilinearly interpolated random lattice in `[-1, 1]` with smoothstep weights.
fn value_noise<R: Rng + ?Sized>(size: usize, cells: usize, rng: &mut R) -> Vec<f32> {
    let n = cells + 1;
    let lattice: Vec<f32> = (0..n * n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let scale = cells as f32 / size as f32;
    let smooth = |t: f32| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(size * size);
    for r in 0..size {
        let y = r as f32 * scale;
        let (y0, ty) = (y.floor() as usize, smooth(y.fract()));
        for c in 0..size {
            let x = c as f32 * scale;
            let (x0, tx) = (x.floor() as usize, smooth(x.fract()));
            let at = |yy: usize, xx: usize| lattice[yy.min(cells) * n + xx.min(cells)];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}
