use super::raster::{Image, Mask, Role};
use crate::error::{Error, Result};

/// A plain image, its optional degraded copy, and the ground-truth mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub plain: Image,
    pub distorted: Option<Image>,
    pub mask: Mask,
}

impl Sample {
    pub fn new(id: impl Into<String>, plain: Image, mask: Mask) -> Result<Self> {
        let id = id.into();
        if plain.dims() != mask.dims() {
            return Err(Error::BadSample {
                id,
                reason: format!("image is {:?} but mask is {:?}", plain.dims(), mask.dims()),
            });
        }
        if plain.role() != Role::Plain {
            return Err(Error::BadSample {
                id,
                reason: format!("expected a plain image, got {:?}", plain.role()),
            });
        }
        Ok(Self {
            id,
            plain,
            distorted: None,
            mask,
        })
    }

    pub fn with_distorted(mut self, distorted: Image) -> Result<Self> {
        self.set_distorted(distorted)?;
        Ok(self)
    }

    pub fn set_distorted(&mut self, distorted: Image) -> Result<()> {
        if distorted.dims() != self.plain.dims() {
            return Err(Error::BadSample {
                id: self.id.clone(),
                reason: format!(
                    "distorted image is {:?} but plain is {:?}",
                    distorted.dims(),
                    self.plain.dims()
                ),
            });
        }
        self.distorted = Some(distorted);
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        self.plain.dims()
    }

    /// The distorted image, or an error naming the sample if it was never degraded.
    pub fn distorted(&self) -> Result<&Image> {
        self.distorted.as_ref().ok_or_else(|| Error::BadSample {
            id: self.id.clone(),
            reason: "no distorted image attached".into(),
        })
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Sample> {
        Ok(Sample {
            id: format!("{}@{top},{left}", self.id),
            plain: self.plain.crop(top, left, height, width)?,
            distorted: self
                .distorted
                .as_ref()
                .map(|d| d.crop(top, left, height, width))
                .transpose()?,
            mask: self.mask.crop(top, left, height, width)?,
        })
    }
}
