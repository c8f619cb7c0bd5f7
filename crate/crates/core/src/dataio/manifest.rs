//! On-disk dataset layout and the line-delimited manifest index.
//!
//! ```text
//! <root>/images/<id>.png
//! <root>/masks/<id>.png        single channel, 0 or 255
//! <root>/distorted/<id>.jpg    optional cache
//! <root>/manifest.jsonl        {"id": .., "split": .., "qf": ..} per line
//! ```

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::jpeg::DegradationSpec;
use super::raster::{Image, Mask, Role};
use super::sample::Sample;
use crate::error::{invalid, Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Val,
    Test,
    /// Every entry regardless of split; also the tag of a freshly generated corpus.
    All,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
            SplitTag::All => "all",
        })
    }
}

impl FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            "all" => Ok(SplitTag::All),
            other => Err(invalid!("unknown split `{other}`")),
        }
    }
}

/// One line of the manifest index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: SplitTag,
    /// Quality factor of a cached `distorted/<id>.jpg`, if any.
    #[serde(default)]
    pub qf: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub split: SplitTag,
    pub degradation: Option<DegradationSpec>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn image_path(&self, id: &str) -> PathBuf {
        self.root.join("images").join(format!("{id}.png"))
    }

    pub fn mask_path(&self, id: &str) -> PathBuf {
        self.root.join("masks").join(format!("{id}.png"))
    }

    pub fn distorted_path(&self, id: &str) -> PathBuf {
        self.root.join("distorted").join(format!("{id}.jpg"))
    }

    /// Reads one sample from disk and validates its dimensions.
    pub fn load_sample(&self, index: usize) -> Result<Sample> {
        let entry = self
            .entries
            .get(index)
            .ok_or_else(|| invalid!("sample index {index} out of range"))?;
        let id = &entry.id;
        let plain = Image::read_png(&self.image_path(id), Role::Plain).map_err(|e| name(id, e))?;
        let mask = Mask::read_png(&self.mask_path(id)).map_err(|e| name(id, e))?;
        let mut sample = Sample::new(id.clone(), plain, mask)?;
        if entry.qf.is_some() {
            let path = self.distorted_path(id);
            let img = image::open(&path)
                .map_err(|e| name(id, e.into()))?
                .to_rgb8();
            sample.set_distorted(Image::from_rgb8(&img, Role::Distorted)?)?;
        }
        Ok(sample)
    }

    pub fn load_all(&self) -> Result<Vec<Sample>> {
        (0..self.len()).map(|i| self.load_sample(i)).collect()
    }

    /// A copy restricted to the given entries, re-tagged with `split`.
    pub fn subset(&self, indices: &[usize], split: SplitTag) -> DatasetManifest {
        DatasetManifest {
            root: self.root.clone(),
            entries: indices
                .iter()
                .map(|&i| ManifestEntry {
                    split,
                    ..self.entries[i].clone()
                })
                .collect(),
            split,
            degradation: self.degradation,
        }
    }

    /// Writes entries as one JSON object per line.
    pub fn write_index(&self, path: &Path) -> Result<()> {
        write_entries(path, &self.entries)
    }
}

pub(crate) fn write_entries(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut buf = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut buf, e)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn name(id: &str, err: Error) -> Error {
    Error::BadSample {
        id: id.to_string(),
        reason: err.to_string(),
    }
}

/// Lists the samples under `root` belonging to `split`.
///
/// Entries come from `manifest.jsonl` when present; otherwise every
/// `images/*.png` is listed under the requested tag. Each image must have a
/// mask; pixel dimensions are checked when a sample is first loaded.
pub fn load_dataset(root: &Path, split: SplitTag) -> Result<DatasetManifest> {
    let index = root.join(MANIFEST_FILE);
    let entries = if index.exists() {
        let f = fs::File::open(&index).map_err(|e| Error::io(&index, e))?;
        let mut entries = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(&index, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line)?;
            if split == SplitTag::All || entry.split == split {
                entries.push(entry);
            }
        }
        entries
    } else {
        let dir = root.join("images");
        let listing = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut ids = Vec::new();
        for item in listing {
            let path = item.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("png") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        ids.into_iter()
            .map(|id| ManifestEntry {
                id,
                split,
                qf: None,
            })
            .collect()
    };
    if entries.is_empty() {
        return Err(Error::NoSamples(root.to_path_buf()));
    }
    let mut seen = HashSet::new();
    for e in &entries {
        if !seen.insert(e.id.as_str()) {
            return Err(invalid!(
                "duplicate sample id `{}` in {}",
                e.id,
                root.display()
            ));
        }
    }
    let manifest = DatasetManifest {
        root: root.to_path_buf(),
        entries,
        split,
        degradation: None,
    };
    for e in &manifest.entries {
        let image = manifest.image_path(&e.id);
        if !image.exists() {
            return Err(Error::BadSample {
                id: e.id.clone(),
                reason: format!("missing image at {}", image.display()),
            });
        }
        let mask = manifest.mask_path(&e.id);
        if !mask.exists() {
            return Err(Error::MissingMask {
                id: e.id.clone(),
                path: mask,
            });
        }
    }
    Ok(manifest)
}

/// Number of training items out of `n`: `round(frac * n)` kept within `[1, n - 1]`.
pub fn train_count(n: usize, frac: f64) -> usize {
    ((frac * n as f64).round() as usize).clamp(1, n - 1)
}

/// Seeded shuffle of `0..n`, cut into `(train, rest)` index lists.
pub fn split_indices(n: usize, train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(invalid!("need at least 2 samples to split, got {n}"));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(invalid!(
            "train fraction must be in (0, 1), got {train_frac}"
        ));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let rest = idx.split_off(train_count(n, train_frac));
    idx.sort_unstable();
    let mut rest = rest;
    rest.sort_unstable();
    Ok((idx, rest))
}

/// Deterministic disjoint partition of a manifest into train and test parts.
pub fn split_dataset(
    manifest: &DatasetManifest,
    train_frac: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    let (train, test) = split_indices(manifest.len(), train_frac, seed)?;
    Ok((
        manifest.subset(&train, SplitTag::Train),
        manifest.subset(&test, SplitTag::Test),
    ))
}

/// Splits in-memory samples the same way [`split_dataset`] splits manifests.
pub fn split_samples<T: Clone>(
    items: &[T],
    train_frac: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    let (a, b) = split_indices(items.len(), train_frac, seed)?;
    Ok((
        a.into_iter().map(|i| items[i].clone()).collect(),
        b.into_iter().map(|i| items[i].clone()).collect(),
    ))
}
