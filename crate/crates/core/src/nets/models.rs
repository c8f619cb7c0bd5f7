use candle_core::{DType, Tensor, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, Component, NetConfig, Provenance};
use super::convert::{image_to_tensor, images_to_tensor, tensor_to_images, tensor_to_prob_maps};
use super::params::{clamp_straight_through, leaky_relu, Conv, Linear, ParamStore};
use super::unet::UNet;
use crate::dataio::{Image, ProbabilityMap, Role};
use crate::error::{invalid, Error, Result};

/// Probabilities leaving the localizer are kept inside `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-7;

/// Shared behaviour of the three trainable components.
pub trait Network: Sized {
    type Config: Copy + PartialEq + std::fmt::Debug;
    const COMPONENT: Component;

    fn build(config: Self::Config, seed: u64, dtype: DType) -> Result<Self>;
    fn config(&self) -> Self::Config;
    fn params(&self) -> &ParamStore;
    fn wrap_config(config: Self::Config) -> NetConfig;
    fn unwrap_config(config: &NetConfig) -> Option<Self::Config>;

    fn new(config: Self::Config, seed: u64) -> Result<Self> {
        Self::build(config, seed, DType::F32)
    }

    fn param_count(&self) -> usize {
        self.params().param_count()
    }

    fn digest(&self) -> Result<String> {
        self.params().digest()
    }

    fn to_checkpoint(&self, provenance: Provenance) -> Result<Checkpoint> {
        Ok(Checkpoint {
            config: Self::wrap_config(self.config()),
            provenance,
            params: self.params().export()?,
        })
    }

    /// Builds a fresh network from a checkpoint of the matching component.
    fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Self::from_checkpoint_with(ckpt, DType::F32)
    }

    fn from_checkpoint_with(ckpt: &Checkpoint, dtype: DType) -> Result<Self> {
        let config = Self::unwrap_config(&ckpt.config).ok_or_else(|| {
            Error::Checkpoint(format!(
                "expected a {} checkpoint, found {}",
                Self::COMPONENT,
                ckpt.component()
            ))
        })?;
        let net = Self::build(config, 0, dtype)?;
        net.params().import(&ckpt.params)?;
        Ok(net)
    }

    /// Overwrites this network's weights; the checkpoint's config must match.
    fn load_weights(&self, ckpt: &Checkpoint) -> Result<()> {
        match Self::unwrap_config(&ckpt.config) {
            Some(c) if c == self.config() => self.params().import(&ckpt.params),
            Some(c) => Err(Error::Checkpoint(format!(
                "config mismatch: network has {:?}, checkpoint has {c:?}",
                self.config()
            ))),
            None => Err(Error::Checkpoint(format!(
                "expected a {} checkpoint, found {}",
                Self::COMPONENT,
                ckpt.component()
            ))),
        }
    }

    /// Deep copy with independent parameter storage.
    fn duplicate(&self) -> Result<Self> {
        let copy = Self::build(self.config(), 0, self.params().dtype())?;
        copy.params().copy_from(self.params())?;
        Ok(copy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestorationConfig {
    pub base_width: usize,
    pub depth: usize,
    /// Predict a correction added to the input instead of the image itself.
    pub residual: bool,
}

impl Default for RestorationConfig {
    fn default() -> Self {
        Self {
            base_width: 16,
            depth: 3,
            residual: true,
        }
    }
}

/// Encoder-decoder mapping a distorted RGB image to a restored one.
#[derive(Debug, Clone)]
pub struct RestorationNet {
    config: RestorationConfig,
    store: ParamStore,
    trunk: UNet,
    head: Conv,
}

/// Initial scale of the restorer's output projection.
const RESTORE_HEAD_GAIN: f64 = 0.1;

impl Network for RestorationNet {
    type Config = RestorationConfig;
    const COMPONENT: Component = Component::Restoration;

    fn build(config: RestorationConfig, seed: u64, dtype: DType) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(dtype);
        let trunk = UNet::new(&mut store, 3, config.base_width, config.depth, &mut rng)?;
        let head = Conv::new(
            &mut store,
            "head",
            config.base_width,
            3,
            1,
            1,
            0,
            RESTORE_HEAD_GAIN,
            &mut rng,
        )?;
        Ok(Self {
            config,
            store,
            trunk,
            head,
        })
    }

    fn config(&self) -> RestorationConfig {
        self.config
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn wrap_config(config: RestorationConfig) -> NetConfig {
        NetConfig::Restoration(config)
    }

    fn unwrap_config(config: &NetConfig) -> Option<RestorationConfig> {
        match config {
            NetConfig::Restoration(c) => Some(*c),
            _ => None,
        }
    }
}

impl RestorationNet {
    /// `(N, 3, H, W)` in, `(N, 3, H, W)` in `[0, 1]` out.
    pub fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let out = self.trunk.forward(xs)?;
        let ys = self.head.forward(&out.decoded)?;
        let ys = if self.config.residual { (xs + ys)? } else { ys };
        clamp_straight_through(&ys)
    }

    pub fn restore(&self, image: &Image) -> Result<Image> {
        let xs = image_to_tensor(image, self.store.dtype())?;
        let ys = self.forward(&xs)?;
        Ok(tensor_to_images(&ys, Role::Restored)?.remove(0))
    }

    pub fn granularity(&self) -> usize {
        self.trunk.granularity()
    }

    /// Zeroes the output projection; with `residual` set the net becomes the identity.
    pub fn zero_output_projection(&self) -> Result<()> {
        for (name, var) in self.store.vars() {
            if name.starts_with("head.") {
                var.set(&var.zeros_like()?)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationConfig {
    pub base_width: usize,
    pub depth: usize,
    /// Feed a fixed Laplacian residual of the input alongside the RGB channels.
    #[serde(default)]
    pub highpass: bool,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            base_width: 16,
            depth: 3,
            highpass: true,
        }
    }
}

/// Scale applied to the Laplacian residual so noise-level detail is O(1).
const HIGHPASS_GAIN: f64 = 4.0;

/// Per-channel 4-neighbour Laplacian with replicated borders.
pub fn laplacian_residual(xs: &Tensor) -> Result<Tensor> {
    let (_, c, _, _) = xs.dims4()?;
    let k: [f32; 9] = [0.0, -1.0, 0.0, -1.0, 4.0, -1.0, 0.0, -1.0, 0.0];
    let kernel = Tensor::from_slice(&k, (1, 1, 3, 3), xs.device())?
        .to_dtype(xs.dtype())?
        .repeat((c, 1, 1, 1))?;
    let padded = xs.pad_with_same(2, 1, 1)?.pad_with_same(3, 1, 1)?;
    Ok(padded.conv2d(&kernel, 0, 1, 1, c)?)
}

/// Encoder-decoder producing a per-pixel tamper probability.
#[derive(Debug, Clone)]
pub struct LocalizationNet {
    config: LocalizationConfig,
    store: ParamStore,
    trunk: UNet,
    head: Conv,
}

impl Network for LocalizationNet {
    type Config = LocalizationConfig;
    const COMPONENT: Component = Component::Localization;

    fn build(config: LocalizationConfig, seed: u64, dtype: DType) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(dtype);
        let c_in = if config.highpass { 6 } else { 3 };
        let trunk = UNet::new(&mut store, c_in, config.base_width, config.depth, &mut rng)?;
        let head = Conv::new(
            &mut store,
            "head",
            config.base_width,
            1,
            1,
            1,
            0,
            1.0,
            &mut rng,
        )?;
        Ok(Self {
            config,
            store,
            trunk,
            head,
        })
    }

    fn config(&self) -> LocalizationConfig {
        self.config
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn wrap_config(config: LocalizationConfig) -> NetConfig {
        NetConfig::Localization(config)
    }

    fn unwrap_config(config: &NetConfig) -> Option<LocalizationConfig> {
        match config {
            NetConfig::Localization(c) => Some(*c),
            _ => None,
        }
    }
}

impl LocalizationNet {
    /// `(N, 3, H, W)` in, `(N, 1, H, W)` probabilities out.
    pub fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_features(xs)?.0)
    }

    /// Probabilities together with the deepest encoder activation.
    pub fn forward_with_features(&self, xs: &Tensor) -> Result<(Tensor, Tensor)> {
        let out = if self.config.highpass {
            let hp = (laplacian_residual(xs)? * HIGHPASS_GAIN)?;
            self.trunk.forward(&Tensor::cat(&[xs, &hp], 1)?)?
        } else {
            self.trunk.forward(xs)?
        };
        let logits = self.head.forward(&out.decoded)?;
        let probs = candle_nn::ops::sigmoid(&logits)?.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)?;
        Ok((probs, out.bottleneck))
    }

    pub fn localize(&self, image: &Image) -> Result<ProbabilityMap> {
        let xs = image_to_tensor(image, self.store.dtype())?;
        let mut maps = tensor_to_prob_maps(&self.forward(&xs)?)?;
        let map = maps.remove(0);
        // f32 rounding can land on 1.0; keep the open interval.
        let hi = 1.0 - f32::EPSILON / 2.0;
        let lo = PROB_FLOOR as f32;
        let data = map.data().iter().map(|p| p.clamp(lo, hi)).collect();
        ProbabilityMap::new(map.height(), map.width(), data)
    }

    pub fn granularity(&self) -> usize {
        self.trunk.granularity()
    }

    /// Length of the vectors returned by [`LocalizationNet::extract_pixel_features`].
    pub fn feature_dim(&self) -> usize {
        self.config.base_width << self.config.depth
    }

    /// Deepest encoder features, nearest-neighbour upsampled, at each `(row, col)`.
    pub fn extract_pixel_features(
        &self,
        image: &Image,
        coords: &[(usize, usize)],
    ) -> Result<Vec<Vec<f32>>> {
        let (h, w) = image.dims();
        if let Some(&(r, c)) = coords.iter().find(|&&(r, c)| r >= h || c >= w) {
            return Err(invalid!("coordinate ({r}, {c}) outside {h}x{w} image"));
        }
        let xs = image_to_tensor(image, self.store.dtype())?;
        let (_, feats) = self.forward_with_features(&xs)?;
        let (_, ch, fh, fw) = feats.dims4()?;
        let feats = feats
            .squeeze(0)?
            .to_dtype(DType::F32)?
            .flatten_all()?
            .to_vec1::<f32>()?;
        let (sy, sx) = (h / fh, w / fw);
        Ok(coords
            .iter()
            .map(|&(r, c)| {
                let p = (r / sy) * fw + c / sx;
                (0..ch).map(|k| feats[k * fh * fw + p]).collect()
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub base_width: usize,
    pub stages: usize,
    /// Side length of the square blocks the discriminator accepts.
    pub input_size: usize,
    /// Feed a fixed Laplacian residual of the input alongside the RGB channels.
    #[serde(default)]
    pub highpass: bool,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            base_width: 16,
            stages: 3,
            input_size: 128,
            highpass: true,
        }
    }
}

/// Strided convolution stack ending in one squashed logit per image.
#[derive(Debug, Clone)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    store: ParamStore,
    stages: Vec<Conv>,
    classifier: Linear,
}

impl Network for Discriminator {
    type Config = DiscriminatorConfig;
    const COMPONENT: Component = Component::Discriminator;

    fn build(config: DiscriminatorConfig, seed: u64, dtype: DType) -> Result<Self> {
        if config.stages == 0 || config.base_width == 0 {
            return Err(invalid!(
                "discriminator needs at least one stage and positive width"
            ));
        }
        let div = 1usize << config.stages;
        if !config.input_size.is_multiple_of(div) || config.input_size < div {
            return Err(invalid!(
                "discriminator input {} must be a positive multiple of {div}",
                config.input_size
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(dtype);
        let mut stages = Vec::with_capacity(config.stages);
        let mut c_in = if config.highpass { 6 } else { 3 };
        for s in 0..config.stages {
            let c_out = config.base_width << s;
            stages.push(Conv::new(
                &mut store,
                &format!("stage{s}"),
                c_in,
                c_out,
                4,
                2,
                1,
                1.0,
                &mut rng,
            )?);
            c_in = c_out;
        }
        let side = config.input_size / div;
        let classifier = Linear::new(
            &mut store,
            "classifier",
            c_in * side * side,
            1,
            0.0,
            &mut rng,
        )?;
        Ok(Self {
            config,
            store,
            stages,
            classifier,
        })
    }

    fn config(&self) -> DiscriminatorConfig {
        self.config
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn wrap_config(config: DiscriminatorConfig) -> NetConfig {
        NetConfig::Discriminator(config)
    }

    fn unwrap_config(config: &NetConfig) -> Option<DiscriminatorConfig> {
        match config {
            NetConfig::Discriminator(c) => Some(*c),
            _ => None,
        }
    }
}

impl Discriminator {
    /// `(N, 3, S, S)` in, `(N,)` probabilities of "plain" out.
    pub fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let (n, _, h, w) = xs.dims4()?;
        let s = self.config.input_size;
        if (h, w) != (s, s) {
            return Err(Error::ShapeMismatch(format!(
                "discriminator expects {s}x{s} blocks, got {h}x{w}"
            )));
        }
        let mut x = if self.config.highpass {
            Tensor::cat(&[xs, &(laplacian_residual(xs)? * HIGHPASS_GAIN)?], 1)?
        } else {
            xs.clone()
        };
        for stage in &self.stages {
            x = leaky_relu(&stage.forward(&x)?)?;
        }
        let logits = self.classifier.forward(&x.reshape((n, ()))?)?;
        Ok(candle_nn::ops::sigmoid(&logits.squeeze(D::Minus1)?)?)
    }

    pub fn discriminate(&self, image: &Image) -> Result<f64> {
        Ok(self.discriminate_batch(&[image])?[0])
    }

    pub fn discriminate_batch(&self, images: &[&Image]) -> Result<Vec<f64>> {
        let xs = images_to_tensor(images, self.store.dtype())?;
        Ok(self.forward(&xs)?.to_dtype(DType::F64)?.to_vec1::<f64>()?)
    }
}
