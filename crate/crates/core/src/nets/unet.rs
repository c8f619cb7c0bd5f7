use candle_core::Tensor;
use rand::Rng;

use super::params::{leaky_relu, Conv, ParamStore};
use crate::error::{invalid, Result};

/// Two 3x3 convolutions, each followed by a leaky ReLU.
#[derive(Debug, Clone)]
struct DoubleConv {
    first: Conv,
    second: Conv,
}

impl DoubleConv {
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            first: Conv::new(
                store,
                &format!("{name}.conv1"),
                c_in,
                c_out,
                3,
                1,
                1,
                1.0,
                rng,
            )?,
            second: Conv::new(
                store,
                &format!("{name}.conv2"),
                c_out,
                c_out,
                3,
                1,
                1,
                1.0,
                rng,
            )?,
        })
    }

    fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let xs = leaky_relu(&self.first.forward(xs)?)?;
        leaky_relu(&self.second.forward(&xs)?)
    }
}

/// Encoder-decoder with skip connections. Stage `l` has `width * 2^l` channels;
/// downsampling is 2x2 average pooling, upsampling is nearest neighbour.
#[derive(Debug, Clone)]
pub(crate) struct UNet {
    encoder: Vec<DoubleConv>,
    decoder: Vec<DoubleConv>,
    depth: usize,
}

/// Decoder output plus the deepest encoder activation.
pub(crate) struct UNetOutput {
    pub decoded: Tensor,
    pub bottleneck: Tensor,
}

impl UNet {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        c_in: usize,
        width: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if width == 0 {
            return Err(invalid!("base width must be positive"));
        }
        let ch = |l: usize| width << l;
        let mut encoder = Vec::with_capacity(depth + 1);
        encoder.push(DoubleConv::new(store, "enc0", c_in, ch(0), rng)?);
        for l in 1..=depth {
            encoder.push(DoubleConv::new(
                store,
                &format!("enc{l}"),
                ch(l - 1),
                ch(l),
                rng,
            )?);
        }
        let mut decoder = Vec::with_capacity(depth);
        for l in (0..depth).rev() {
            decoder.push(DoubleConv::new(
                store,
                &format!("dec{l}"),
                ch(l + 1) + ch(l),
                ch(l),
                rng,
            )?);
        }
        Ok(Self {
            encoder,
            decoder,
            depth,
        })
    }

    pub fn granularity(&self) -> usize {
        1 << self.depth
    }

    pub fn forward(&self, xs: &Tensor) -> Result<UNetOutput> {
        let (_, _, h, w) = xs.dims4()?;
        let g = self.granularity();
        if h % g != 0 || w % g != 0 {
            return Err(invalid!(
                "input {h}x{w} is not divisible by {g}; pad the image to a multiple of {g}"
            ));
        }
        let mut skips = Vec::with_capacity(self.depth);
        let mut x = self.encoder[0].forward(xs)?;
        for stage in &self.encoder[1..] {
            skips.push(x.clone());
            x = stage.forward(&x.avg_pool2d(2)?)?;
        }
        let bottleneck = x.clone();
        for stage in &self.decoder {
            let skip = skips.pop().expect("one skip per decoder stage");
            let (_, _, sh, sw) = skip.dims4()?;
            let up = x.upsample_nearest2d(sh, sw)?;
            x = stage.forward(&Tensor::cat(&[&up, &skip], 1)?)?;
        }
        Ok(UNetOutput {
            decoded: x,
            bottleneck,
        })
    }
}
