//! In-memory rasters: RGB images, binary masks and probability maps.
//!
//! Pixels are stored row-major. Images keep interleaved RGB triplets as
//! `f32` in `[0, 1]`; files on disk are always 8-bit (16-bit for
//! probability maps).

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Which stage of the pipeline produced an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Plain,
    Distorted,
    Restored,
}

/// An `H x W x 3` RGB raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
    role: Role,
}

impl Image {
    /// Builds an image from interleaved RGB values. Every value must lie in `[0, 1]`.
    pub fn new(height: usize, width: usize, data: Vec<f32>, role: Role) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid!(
                "image dimensions must be positive, got {height}x{width}"
            ));
        }
        if data.len() != height * width * 3 {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values for a {height}x{width}x3 image, got {}",
                height * width * 3,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid!("pixel value {bad} outside [0, 1]"));
        }
        Ok(Self {
            height,
            width,
            data,
            role,
        })
    }

    /// Like [`Image::new`] but clamps out-of-range values instead of failing.
    pub fn from_clamped(
        height: usize,
        width: usize,
        mut data: Vec<f32>,
        role: Role,
    ) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(height, width, data, role)
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3], role: Role) -> Result<Self> {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self::new(height, width, data, role)
    }

    pub fn from_rgb8(img: &RgbImage, role: Role) -> Result<Self> {
        let (w, h) = img.dimensions();
        let data = img.as_raw().iter().map(|&v| f32::from(v) / 255.0).collect();
        Self::new(h as usize, w as usize, data, role)
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let raw = self.data.iter().map(|&v| quantize_u8(v)).collect();
        ImageBuffer::<Rgb<u8>, Vec<u8>>::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    pub fn read_png(path: &Path, role: Role) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        Self::from_rgb8(&img, role)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Interleaved RGB values, row-major.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f32; 3]) {
        let i = (row * self.width + col) * 3;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[i + c] = v.clamp(0.0, 1.0);
        }
    }

    /// Copy of the same pixels under a different role.
    pub fn with_role(&self, role: Role) -> Image {
        Image {
            role,
            ..self.clone()
        }
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        check_window(self.dims(), top, left, height, width)?;
        let mut data = Vec::with_capacity(height * width * 3);
        for r in top..top + height {
            let start = (r * self.width + left) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        Ok(Image {
            height,
            width,
            data,
            role: self.role,
        })
    }

    /// Mean absolute difference over all `H * W * 3` values.
    pub fn mean_abs_diff(&self, other: &Image) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| f64::from((a - b).abs()))
            .sum();
        Ok(sum / self.data.len() as f64)
    }
}

/// A binary ground-truth or predicted mask, `1` marking tampered pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid!(
                "mask dimensions must be positive, got {height}x{width}"
            ));
        }
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "expected {} mask values, got {}",
                height * width,
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(invalid!("mask values must be 0 or 1"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0; height * width])
    }

    /// Reads a single-channel mask; any value at or above 128 is tampered.
    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        let data = img.as_raw().iter().map(|&v| u8::from(v >= 128)).collect();
        Self::new(h as usize, w as usize, data)
    }

    /// Writes the mask as 8-bit grayscale with values 0 and 255.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let raw = self.data.iter().map(|&v| v * 255).collect();
        let img = GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = u8::from(value);
    }

    pub fn tampered_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn tampered_fraction(&self) -> f64 {
        self.tampered_count() as f64 / self.data.len() as f64
    }

    pub fn has_both_classes(&self) -> bool {
        let t = self.tampered_count();
        t > 0 && t < self.data.len()
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Mask> {
        check_window(self.dims(), top, left, height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for r in top..top + height {
            let start = r * self.width + left;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Ok(Mask {
            height,
            width,
            data,
        })
    }
}

/// Per-pixel tamper probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid!(
                "map dimensions must be positive, got {height}x{width}"
            ));
        }
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "expected {} probabilities, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid!("probability {bad} outside [0, 1]"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        check_window(self.dims(), top, left, height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for r in top..top + height {
            let start = r * self.width + left;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Writes the map as a 16-bit grayscale PNG (0 maps to 0, 1 to 65535).
    pub fn write_png16(&self, path: &Path) -> Result<()> {
        let raw: Vec<u16> = self
            .data
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        let img = ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(
            self.width as u32,
            self.height as u32,
            raw,
        )
        .expect("buffer length matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

pub(crate) fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn check_window(dims: (usize, usize), top: usize, left: usize, h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || top + h > dims.0 || left + w > dims.1 {
        return Err(invalid!(
            "crop {h}x{w} at ({top}, {left}) does not fit in {}x{}",
            dims.0,
            dims.1
        ));
    }
    Ok(())
}
