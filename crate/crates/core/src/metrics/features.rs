use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::{Image, Mask};
use crate::error::{invalid, Error, Result};
use crate::nets::LocalizationNet;

/// Number of projection directions used by [`feature_emd`].
pub const EMD_DIRECTIONS: usize = 128;
/// Seed of the projection directions used by [`feature_emd`].
pub const EMD_SEED: u64 = 0x05ee_de3d;

/// Sliced earth mover's distance: the mean, over fixed random unit
/// directions, of the exact 1-D transport cost between the projected sets.
pub fn feature_emd(a: &[Vec<f32>], b: &[Vec<f32>]) -> Result<f64> {
    feature_emd_with(a, b, EMD_DIRECTIONS, EMD_SEED)
}

pub fn feature_emd_with(
    a: &[Vec<f32>],
    b: &[Vec<f32>],
    directions: usize,
    seed: u64,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid!("both feature sets must be non-empty"));
    }
    if directions == 0 {
        return Err(invalid!("at least one projection direction is needed"));
    }
    let dim = a[0].len();
    if let Some(v) = a.iter().chain(b).find(|v| v.len() != dim) {
        return Err(Error::ShapeMismatch(format!(
            "feature vectors of length {dim} and {}",
            v.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut used = 0;
    while used < directions {
        let theta: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let project = |v: &Vec<f32>| -> f64 {
            v.iter()
                .zip(&theta)
                .map(|(&x, t)| f64::from(x) * t)
                .sum::<f64>()
                / norm
        };
        let pa: Vec<f64> = a.iter().map(project).collect();
        let pb: Vec<f64> = b.iter().map(project).collect();
        total += wasserstein_1d(pa, pb);
        used += 1;
    }
    Ok(total / directions as f64)
}

/// Exact W1 between two empirical 1-D distributions with uniform weights,
/// as the integral of the gap between their quantile functions.
pub fn wasserstein_1d(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut t = 0.0f64;
    let mut cost = 0.0;
    while i < n && j < m {
        // Next quantile breakpoint; compare i+1/n with j+1/m exactly.
        let step_a = (i + 1) * m;
        let step_b = (j + 1) * n;
        let next = step_a.min(step_b) as f64 / (n * m) as f64;
        cost += (next - t) * (a[i] - b[j]).abs();
        t = next;
        if step_a <= step_b {
            i += 1;
        }
        if step_b <= step_a {
            j += 1;
        }
    }
    cost
}

/// Projects vectors onto their two leading principal axes. Each axis is
/// oriented so that its largest-magnitude component is positive.
pub fn project_2d(feats: &[Vec<f32>]) -> Result<Vec<[f64; 2]>> {
    if feats.len() < 3 {
        return Err(invalid!(
            "projection needs at least 3 vectors, got {}",
            feats.len()
        ));
    }
    let dim = feats[0].len();
    if dim == 0 {
        return Err(invalid!("feature vectors are empty"));
    }
    if let Some(v) = feats.iter().find(|v| v.len() != dim) {
        return Err(Error::ShapeMismatch(format!(
            "feature vectors of length {dim} and {}",
            v.len()
        )));
    }
    let n = feats.len();
    let x = DMatrix::from_fn(n, dim, |r, c| f64::from(feats[r][c]));
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, dim, |r, c| x[(r, c)] - mean[c]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&p, &q| {
        eig.eigenvalues[q]
            .total_cmp(&eig.eigenvalues[p])
            .then(p.cmp(&q))
    });

    let mut axes = Vec::with_capacity(2);
    for k in 0..2 {
        match order.get(k) {
            Some(&idx) => {
                let mut axis: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
                let lead =
                    axis.iter()
                        .copied()
                        .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
                if lead < 0.0 {
                    axis.iter_mut().for_each(|v| *v = -*v);
                }
                axes.push(Some(axis));
            }
            None => axes.push(None),
        }
    }
    Ok((0..n)
        .map(|r| {
            let coord = |axis: &Option<Vec<f64>>| match axis {
                Some(a) => (0..dim).map(|c| centered[(r, c)] * a[c]).sum(),
                None => 0.0,
            };
            [coord(&axes[0]), coord(&axes[1])]
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelClass {
    Original,
    Tampered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub class: PixelClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAnalysis {
    /// Distance on the features as the network produced them.
    pub emd: f64,
    /// Distance after pooled per-dimension standardization.
    pub emd_standardized: f64,
    pub n_original: usize,
    pub n_tampered: usize,
    pub points: Vec<ScatterPoint>,
}

impl FeatureAnalysis {
    /// Writes `x,y,class` rows.
    pub fn write_scatter_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("x,y,class\n");
        for p in &self.points {
            let class = match p.class {
                PixelClass::Original => "original",
                PixelClass::Tampered => "tampered",
            };
            out.push_str(&format!("{},{},{class}\n", p.x, p.y));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Shifts and scales every dimension to zero mean and unit variance over
/// the union of both sets. Constant dimensions become zero.
pub fn standardize(a: &[Vec<f32>], b: &[Vec<f32>]) -> Result<[Vec<Vec<f32>>; 2]> {
    let dim = a.first().or(b.first()).map_or(0, Vec::len);
    if a.iter().chain(b).any(|v| v.len() != dim) {
        return Err(Error::ShapeMismatch(
            "feature vectors differ in length".into(),
        ));
    }
    let n = (a.len() + b.len()) as f64;
    let mut mean = vec![0.0f64; dim];
    for v in a.iter().chain(b) {
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += f64::from(x) / n;
        }
    }
    let mut var = vec![0.0f64; dim];
    for v in a.iter().chain(b) {
        for ((s, &x), m) in var.iter_mut().zip(v).zip(&mean) {
            *s += (f64::from(x) - m).powi(2) / n;
        }
    }
    let scale = |v: &Vec<f32>| -> Vec<f32> {
        v.iter()
            .zip(&mean)
            .zip(&var)
            .map(|((&x, m), s)| {
                if *s > 0.0 {
                    ((f64::from(x) - m) / s.sqrt()) as f32
                } else {
                    0.0
                }
            })
            .collect()
    };
    Ok([a.iter().map(scale).collect(), b.iter().map(scale).collect()])
}

/// Samples up to `n_per_class` original and tampered pixels across the
/// images, reads the localizer's deepest encoder features at each, and
/// measures how far apart the two feature clouds are, both raw and after
/// standardization so that different networks can be compared.
pub fn analyze_separability<R: Rng + ?Sized>(
    model: &LocalizationNet,
    inputs: &[(&Image, &Mask)],
    n_per_class: usize,
    rng: &mut R,
) -> Result<FeatureAnalysis> {
    if n_per_class == 0 {
        return Err(invalid!("at least one pixel per class is needed"));
    }
    let mut pools: [Vec<(usize, usize, usize)>; 2] = [Vec::new(), Vec::new()];
    for (k, (img, mask)) in inputs.iter().enumerate() {
        if img.dims() != mask.dims() {
            return Err(Error::ShapeMismatch(format!(
                "image {k} is {:?} but its mask is {:?}",
                img.dims(),
                mask.dims()
            )));
        }
        let w = mask.width();
        for (i, &v) in mask.data().iter().enumerate() {
            pools[usize::from(v)].push((k, i / w, i % w));
        }
    }
    for (pool, name) in pools.iter().zip(["original", "tampered"]) {
        if pool.is_empty() {
            return Err(invalid!("no {name} pixels in any mask"));
        }
    }
    let mut chosen: [Vec<(usize, usize, usize)>; 2] = [Vec::new(), Vec::new()];
    for (class, pool) in pools.iter().enumerate() {
        let take = n_per_class.min(pool.len());
        let mut picks: Vec<usize> = sample(rng, pool.len(), take).into_vec();
        picks.sort_unstable();
        chosen[class] = picks.into_iter().map(|i| pool[i]).collect();
    }

    // One forward pass per image that has any chosen pixel.
    let mut per_image: BTreeMap<usize, Vec<(usize, usize, usize)>> = BTreeMap::new();
    for (class, picks) in chosen.iter().enumerate() {
        for (slot, &(k, r, c)) in picks.iter().enumerate() {
            per_image
                .entry(k)
                .or_default()
                .push((class, slot, r * inputs[k].0.width() + c));
        }
    }
    let mut feats: [Vec<Vec<f32>>; 2] = [
        vec![Vec::new(); chosen[0].len()],
        vec![Vec::new(); chosen[1].len()],
    ];
    for (k, wanted) in per_image {
        let img = inputs[k].0;
        let coords: Vec<(usize, usize)> = wanted
            .iter()
            .map(|&(_, _, p)| (p / img.width(), p % img.width()))
            .collect();
        let vectors = model.extract_pixel_features(img, &coords)?;
        for ((class, slot, _), v) in wanted.into_iter().zip(vectors) {
            feats[class][slot] = v;
        }
    }

    let [original, tampered] = feats;
    let emd = feature_emd(&original, &tampered)?;
    let [original, tampered] = standardize(&original, &tampered)?;
    let emd_standardized = feature_emd(&original, &tampered)?;
    let all: Vec<Vec<f32>> = original.iter().chain(&tampered).cloned().collect();
    let points = if all.len() >= 3 {
        project_2d(&all)?
            .into_iter()
            .enumerate()
            .map(|(i, [x, y])| ScatterPoint {
                x,
                y,
                class: if i < original.len() {
                    PixelClass::Original
                } else {
                    PixelClass::Tampered
                },
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(FeatureAnalysis {
        emd,
        emd_standardized,
        n_original: original.len(),
        n_tampered: tampered.len(),
        points,
    })
}
