//! Conversions between rasters and `(N, C, H, W)` tensors.

use candle_core::{DType, Device, Tensor};

use crate::dataio::{Image, Mask, ProbabilityMap, Role};
use crate::error::{invalid, Error, Result};

pub fn images_to_tensor(images: &[&Image], dtype: DType) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| invalid!("empty image batch"))?;
    let (h, w) = first.dims();
    let mut buf: Vec<f32> = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if img.dims() != (h, w) {
            return Err(Error::ShapeMismatch(format!(
                "batch mixes {:?} and {:?} images",
                (h, w),
                img.dims()
            )));
        }
        let data = img.data();
        for c in 0..3 {
            buf.extend(data.iter().skip(c).step_by(3));
        }
    }
    Ok(Tensor::from_vec(buf, (images.len(), 3, h, w), &Device::Cpu)?.to_dtype(dtype)?)
}

pub fn image_to_tensor(image: &Image, dtype: DType) -> Result<Tensor> {
    images_to_tensor(&[image], dtype)
}

/// Inverse of [`images_to_tensor`]; values are clamped into `[0, 1]`.
pub fn tensor_to_images(t: &Tensor, role: Role) -> Result<Vec<Image>> {
    let (n, c, h, w) = t.dims4()?;
    if c != 3 {
        return Err(Error::ShapeMismatch(format!(
            "expected 3 channels, got {c}"
        )));
    }
    let flat = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    let plane = h * w;
    (0..n)
        .map(|i| {
            let base = i * 3 * plane;
            let mut data = Vec::with_capacity(3 * plane);
            for p in 0..plane {
                for ch in 0..3 {
                    data.push(flat[base + ch * plane + p]);
                }
            }
            Image::from_clamped(h, w, data, role)
        })
        .collect()
}

pub fn masks_to_tensor(masks: &[&Mask], dtype: DType) -> Result<Tensor> {
    let first = masks.first().ok_or_else(|| invalid!("empty mask batch"))?;
    let (h, w) = first.dims();
    let mut buf = Vec::with_capacity(masks.len() * h * w);
    for m in masks {
        if m.dims() != (h, w) {
            return Err(Error::ShapeMismatch(format!(
                "batch mixes {:?} and {:?} masks",
                (h, w),
                m.dims()
            )));
        }
        buf.extend(m.data().iter().map(|&v| f32::from(v)));
    }
    Ok(Tensor::from_vec(buf, (masks.len(), 1, h, w), &Device::Cpu)?.to_dtype(dtype)?)
}

/// Splits an `(N, 1, H, W)` probability tensor into maps.
pub fn tensor_to_prob_maps(t: &Tensor) -> Result<Vec<ProbabilityMap>> {
    let (n, c, h, w) = t.dims4()?;
    if c != 1 {
        return Err(Error::ShapeMismatch(format!("expected 1 channel, got {c}")));
    }
    let flat = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    flat.chunks(h * w)
        .take(n)
        .map(|chunk| ProbabilityMap::new(h, w, chunk.to_vec()))
        .collect()
}
