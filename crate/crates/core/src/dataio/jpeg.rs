use std::fmt;
use std::io::Cursor;
use std::str::FromStr;

use image::codecs::jpeg::JpegEncoder;
use image::ImageFormat;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::raster::{Image, Role};
use crate::error::{invalid, Error, Result};

/// How JPEG quality factors are chosen when degrading plain images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DegradationSpec {
    Fixed {
        qf: u8,
    },
    /// Integer quality factor drawn uniformly from `lo..=hi`.
    Uniform {
        lo: u8,
        hi: u8,
    },
}

impl DegradationSpec {
    pub fn fixed(qf: u8) -> Result<Self> {
        let spec = DegradationSpec::Fixed { qf };
        spec.validate()?;
        Ok(spec)
    }

    pub fn uniform(lo: u8, hi: u8) -> Result<Self> {
        let spec = DegradationSpec::Uniform { lo, hi };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DegradationSpec::Fixed { qf } if (1..=100).contains(&qf) => Ok(()),
            DegradationSpec::Uniform { lo, hi } if 1 <= lo && lo <= hi && hi <= 100 => Ok(()),
            other => Err(invalid!("invalid degradation spec {other}")),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, DegradationSpec::Fixed { .. })
    }
}

impl fmt::Display for DegradationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DegradationSpec::Fixed { qf } => write!(f, "fixed:{qf}"),
            DegradationSpec::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
        }
    }
}

/// Parses `fixed:75` or `uniform:70:100`.
impl FromStr for DegradationSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| {
            p.trim()
                .parse::<u8>()
                .map_err(|_| invalid!("bad quality factor `{p}` in `{s}`"))
        };
        match parts.as_slice() {
            ["fixed", qf] => DegradationSpec::fixed(num(qf)?),
            ["uniform", lo, hi] => DegradationSpec::uniform(num(lo)?, num(hi)?),
            _ => Err(invalid!(
                "degradation must be `fixed:<qf>` or `uniform:<lo>:<hi>`, got `{s}`"
            )),
        }
    }
}

/// Draws a quality factor according to `spec`.
pub fn sample_qf<R: Rng + ?Sized>(spec: &DegradationSpec, rng: &mut R) -> Result<u8> {
    spec.validate()?;
    Ok(match *spec {
        DegradationSpec::Fixed { qf } => qf,
        DegradationSpec::Uniform { lo, hi } => rng.random_range(lo..=hi),
    })
}

/// Encodes the image as baseline JPEG at `qf` and decodes it back.
pub fn jpeg_distort(image: &Image, qf: u8) -> Result<Image> {
    if !(1..=100).contains(&qf) {
        return Err(invalid!("quality factor must be in [1, 100], got {qf}"));
    }
    if image.role() != Role::Plain {
        return Err(invalid!(
            "JPEG degradation expects a plain image, got {:?}",
            image.role()
        ));
    }
    let bytes = encode_jpeg(image, qf)?;
    let decoded = image::load_from_memory_with_format(&bytes, ImageFormat::Jpeg)?.to_rgb8();
    Image::from_rgb8(&decoded, Role::Distorted)
}

pub fn encode_jpeg(image: &Image, qf: u8) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    JpegEncoder::new_with_quality(&mut out, qf).encode_image(&image.to_rgb8())?;
    Ok(out.into_inner())
}
