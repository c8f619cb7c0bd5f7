//! Sliding-window prediction and the restore-then-localize pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataio::{Image, Mask, ProbabilityMap, Role};
use crate::error::{invalid, Error, Result};
use crate::metrics::threshold_map;
use crate::nets::{Checkpoint, LocalizationNet, Network, RestorationNet};

/// Decision threshold applied to stitched probability maps.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSpec {
    pub window: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window: 512,
            stride: 512,
        }
    }
}

impl WindowSpec {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        let spec = Self { window, stride };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride > self.window {
            return Err(invalid!(
                "stride must be in [1, window], got stride {} for window {}",
                self.stride,
                self.window
            ));
        }
        Ok(())
    }
}

/// Window origins along one axis. Windows advance by `stride`; the last one
/// is moved back to end exactly at the border. An axis no longer than the
/// window gets a single origin at 0.
pub fn tile_origins(len: usize, window: usize, stride: usize) -> Vec<usize> {
    if len <= window {
        return vec![0];
    }
    let last = len - window;
    let mut out: Vec<usize> = (0..)
        .map(|k| k * stride)
        .take_while(|&o| o < last)
        .collect();
    out.push(last);
    out
}

/// Index into `0..n` after mirroring about the edges without repeating them.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Mirrors `image` to at least `min_h x min_w`; returns it unchanged otherwise.
pub fn reflect_pad(image: &Image, min_h: usize, min_w: usize) -> Result<Image> {
    let (h, w) = image.dims();
    let (nh, nw) = (h.max(min_h), w.max(min_w));
    if (nh, nw) == (h, w) {
        return Ok(image.clone());
    }
    let src = image.data();
    let mut data = Vec::with_capacity(nh * nw * 3);
    for r in 0..nh {
        let sr = reflect(r as isize, h);
        for c in 0..nw {
            let sc = reflect(c as isize, w);
            let i = (sr * w + sc) * 3;
            data.extend_from_slice(&src[i..i + 3]);
        }
    }
    Image::new(nh, nw, data, image.role())
}

struct Stitched {
    prob: Option<ProbabilityMap>,
    restored: Option<Image>,
    windows: usize,
}

fn stitch(
    loc: Option<&LocalizationNet>,
    restorer: Option<&RestorationNet>,
    image: &Image,
    spec: &WindowSpec,
) -> Result<Stitched> {
    spec.validate()?;
    let gran = loc
        .map_or(1, LocalizationNet::granularity)
        .max(restorer.map_or(1, RestorationNet::granularity));
    if !spec.window.is_multiple_of(gran) {
        return Err(invalid!(
            "window {} must be a multiple of the network granularity {gran}",
            spec.window
        ));
    }
    let (h, w) = image.dims();
    let padded = reflect_pad(image, spec.window, spec.window)?;
    let (ph, pw) = padded.dims();
    let rows = tile_origins(ph, spec.window, spec.stride);
    let cols = tile_origins(pw, spec.window, spec.stride);

    let mut prob_acc = loc.map(|_| vec![0.0f64; ph * pw]);
    let mut rest_acc = restorer.map(|_| vec![0.0f64; ph * pw * 3]);
    let mut hits = vec![0u32; ph * pw];
    for &top in &rows {
        for &left in &cols {
            let tile = padded.crop(top, left, spec.window, spec.window)?;
            let input = match restorer {
                Some(r) => r.restore(&tile)?,
                None => tile,
            };
            let p = loc.map(|l| l.localize(&input)).transpose()?;
            for r in 0..spec.window {
                for c in 0..spec.window {
                    let dst = (top + r) * pw + left + c;
                    hits[dst] += 1;
                    if let (Some(acc), Some(p)) = (prob_acc.as_mut(), p.as_ref()) {
                        acc[dst] += f64::from(p.get(r, c));
                    }
                    if let Some(acc) = rest_acc.as_mut() {
                        let px = input.pixel(r, c);
                        for k in 0..3 {
                            acc[dst * 3 + k] += f64::from(px[k]);
                        }
                    }
                }
            }
        }
    }

    let mut prob = prob_acc.as_ref().map(|_| Vec::with_capacity(h * w));
    let mut rest = rest_acc.as_ref().map(|_| Vec::with_capacity(h * w * 3));
    for r in 0..h {
        for c in 0..w {
            let i = r * pw + c;
            let n = f64::from(hits[i]);
            if let (Some(out), Some(acc)) = (prob.as_mut(), prob_acc.as_ref()) {
                out.push((acc[i] / n) as f32);
            }
            if let (Some(out), Some(acc)) = (rest.as_mut(), rest_acc.as_ref()) {
                for k in 0..3 {
                    out.push((acc[i * 3 + k] / n) as f32);
                }
            }
        }
    }
    Ok(Stitched {
        prob: prob
            .map(|data| ProbabilityMap::new(h, w, data))
            .transpose()?,
        restored: rest
            .map(|data| Image::from_clamped(h, w, data, Role::Restored))
            .transpose()?,
        windows: rows.len() * cols.len(),
    })
}

/// Tiles the image, optionally restores each window, localizes it and
/// averages overlapping predictions.
pub fn sliding_window_predict(
    loc: &LocalizationNet,
    image: &Image,
    spec: &WindowSpec,
    restorer: Option<&RestorationNet>,
) -> Result<ProbabilityMap> {
    stitch(Some(loc), restorer, image, spec)?
        .prob
        .ok_or_else(|| invalid!("no probability map was produced"))
}

/// Restores the image window by window, averaging overlaps.
pub fn sliding_window_restore(
    restorer: &RestorationNet,
    image: &Image,
    spec: &WindowSpec,
) -> Result<Image> {
    stitch(None, Some(restorer), image, spec)?
        .restored
        .ok_or_else(|| invalid!("no restored image was produced"))
}

/// Pixels with probability `>= t` become tampered; `t` must lie in `(0, 1)`.
pub fn threshold(prob: &ProbabilityMap, t: f64) -> Result<Mask> {
    threshold_map(prob, t)
}

#[derive(Debug, Clone)]
pub struct PredictionResult {
    pub prob: ProbabilityMap,
    pub mask: Mask,
    pub restored: Option<Image>,
    pub windows: usize,
    pub elapsed_ms: f64,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    height: usize,
    width: usize,
    threshold: f64,
    windows: usize,
    elapsed_ms: f64,
    tampered_fraction: f64,
    restored: bool,
    files: &'a [String],
}

impl PredictionResult {
    /// Writes `<stem>_prob.png` (16-bit), `<stem>_mask.png`, optionally
    /// `<stem>_restored.png`, and a `<stem>.json` sidecar.
    pub fn write_outputs(&self, dir: &Path, stem: &str, threshold: f64) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let prob_path = dir.join(format!("{stem}_prob.png"));
        self.prob.write_png16(&prob_path)?;
        written.push(prob_path);
        let mask_path = dir.join(format!("{stem}_mask.png"));
        self.mask.write_png(&mask_path)?;
        written.push(mask_path);
        if let Some(img) = &self.restored {
            let p = dir.join(format!("{stem}_restored.png"));
            img.write_png(&p)?;
            written.push(p);
        }
        let names: Vec<String> = written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        let sidecar = Sidecar {
            height: self.prob.height(),
            width: self.prob.width(),
            threshold,
            windows: self.windows,
            elapsed_ms: self.elapsed_ms,
            tampered_fraction: self.mask.tampered_fraction(),
            restored: self.restored.is_some(),
            files: &names,
        };
        let json_path = dir.join(format!("{stem}.json"));
        fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)
            .map_err(|e| Error::io(&json_path, e))?;
        written.push(json_path);
        Ok(written)
    }
}

/// A localizer with an optional restorer in front of it.
pub struct Pipeline {
    pub restorer: Option<RestorationNet>,
    pub localizer: LocalizationNet,
    pub spec: WindowSpec,
    pub threshold: f64,
}

impl Pipeline {
    pub fn new(
        localizer: LocalizationNet,
        restorer: Option<RestorationNet>,
        spec: WindowSpec,
    ) -> Self {
        Self {
            restorer,
            localizer,
            spec,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    /// Builds the networks; `r_ckpt` must hold a restorer and `l_ckpt` a localizer.
    pub fn from_checkpoints(
        r_ckpt: Option<&Checkpoint>,
        l_ckpt: &Checkpoint,
        spec: WindowSpec,
    ) -> Result<Self> {
        let localizer = LocalizationNet::from_checkpoint(l_ckpt)?;
        let restorer = r_ckpt.map(RestorationNet::from_checkpoint).transpose()?;
        Ok(Self::new(localizer, restorer, spec))
    }

    pub fn predict(&self, image: &Image) -> Result<PredictionResult> {
        let start = Instant::now();
        let out = stitch(
            Some(&self.localizer),
            self.restorer.as_ref(),
            image,
            &self.spec,
        )?;
        let prob = out
            .prob
            .ok_or_else(|| invalid!("no probability map was produced"))?;
        let mask = threshold(&prob, self.threshold)?;
        Ok(PredictionResult {
            prob,
            mask,
            restored: out.restored,
            windows: out.windows,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }
}

/// Restores then localizes each window with weights from one training run.
pub fn reloc_pipeline(
    r_ckpt: &Checkpoint,
    l_ckpt: &Checkpoint,
    image: &Image,
    spec: &WindowSpec,
) -> Result<PredictionResult> {
    Pipeline::from_checkpoints(Some(r_ckpt), l_ckpt, *spec)?.predict(image)
}

/// Same pipeline with a restorer and a localizer from independent runs.
pub fn compose_modules(
    r_ckpt: &Checkpoint,
    l_ckpt: &Checkpoint,
    image: &Image,
    spec: &WindowSpec,
) -> Result<PredictionResult> {
    reloc_pipeline(r_ckpt, l_ckpt, image, spec)
}
