//! Named parameter storage and the handful of layers the networks use.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A parameter as stored in a checkpoint: name, shape and values.
pub type NamedTensor = (String, Vec<usize>, Vec<f32>);

/// Trainable tensors keyed by name. Iteration order is the sorted name order.
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(dtype: DType) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
            device: Device::Cpu,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Registers a tensor of shape `shape` drawn uniformly from `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        shape: &[usize],
        bound: f64,
        rng: &mut R,
    ) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let values: Vec<f64> = (0..n)
            .map(|_| {
                if bound > 0.0 {
                    rng.random_range(-bound..bound)
                } else {
                    0.0
                }
            })
            .collect();
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        self.insert(name, t)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let t = Tensor::zeros(shape, self.dtype, &self.device)?;
        self.insert(name, t)
    }

    fn insert(&mut self, name: &str, t: Tensor) -> Result<Tensor> {
        let var = Var::from_tensor(&t)?;
        let handle = var.as_tensor().clone();
        if self.vars.insert(name.to_string(), var).is_some() {
            return Err(Error::Checkpoint(format!("duplicate parameter `{name}`")));
        }
        Ok(handle)
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn all_vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn param_count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Parameters as `(name, shape, f32 values)` in name order.
    pub fn export(&self) -> Result<Vec<NamedTensor>> {
        self.vars
            .iter()
            .map(|(name, var)| {
                let t = var.as_tensor();
                let values = t.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
                Ok((name.clone(), t.dims().to_vec(), values))
            })
            .collect()
    }

    /// Overwrites every parameter; names and shapes must match exactly.
    pub fn import(&self, params: &[NamedTensor]) -> Result<()> {
        if params.len() != self.vars.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                self.vars.len(),
                params.len()
            )));
        }
        for (name, shape, values) in params {
            let var = self
                .vars
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter `{name}`")))?;
            if var.dims() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {shape:?}, expected {:?}",
                    var.dims()
                )));
            }
            let t =
                Tensor::from_slice(values, shape.as_slice(), &self.device)?.to_dtype(self.dtype)?;
            var.set(&t)?;
        }
        Ok(())
    }

    /// Copies values from another store with identical layout.
    pub fn copy_from(&self, other: &ParamStore) -> Result<()> {
        for (name, var) in &self.vars {
            let src = other
                .vars
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            var.set(&src.as_tensor().to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    /// SHA-256 over names and f32 little-endian values, hex encoded.
    pub fn digest(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (name, _, values) in self.export()? {
            h.update(name.as_bytes());
            for v in values {
                h.update(v.to_le_bytes());
            }
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// 2-D convolution with bias.
#[derive(Debug, Clone)]
pub struct Conv {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl Conv {
    /// He-uniform initialised kernel, zero bias. `gain` scales the bound.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let fan_in = (c_in * kernel * kernel) as f64;
        let bound = gain * (6.0 / fan_in).sqrt();
        let weight = store.uniform(
            &format!("{name}.weight"),
            &[c_out, c_in, kernel, kernel],
            bound,
            rng,
        )?;
        let bias = store.zeros(&format!("{name}.bias"), &[c_out])?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let ys = xs.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        let bias = self.bias.reshape((1, self.bias.dim(0)?, 1, 1))?;
        Ok(ys.broadcast_add(&bias)?)
    }
}

/// Fully connected layer on `(N, F)` inputs.
#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    /// Weights drawn from `[-bound, bound]`; pass `0.0` for a zero layer.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        f_in: usize,
        f_out: usize,
        bound: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.uniform(&format!("{name}.weight"), &[f_in, f_out], bound, rng)?;
        let bias = store.zeros(&format!("{name}.bias"), &[f_out])?;
        Ok(Self { weight, bias })
    }

    pub fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        Ok(xs.matmul(&self.weight)?.broadcast_add(&self.bias)?)
    }
}

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu(xs: &Tensor) -> Result<Tensor> {
    Ok(xs.maximum(&(xs * LEAKY_SLOPE)?)?)
}

/// Hard clip to `[0, 1]` whose backward pass is the identity.
pub fn clamp_straight_through(xs: &Tensor) -> Result<Tensor> {
    let clipped = xs.clamp(0.0, 1.0)?.detach();
    // `xs - xs.detach()` is exactly zero but carries the gradient.
    Ok((clipped + (xs - xs.detach())?)?)
}
