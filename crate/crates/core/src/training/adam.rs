use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for a list of parameters.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

/// One bias-corrected Adam update. Returns the new parameters; `state` is
/// advanced in place.
pub fn optimizer_step(
    params: &[Tensor],
    grads: &[Tensor],
    lr: f64,
    state: &mut AdamState,
) -> Result<Vec<Tensor>> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.dims() != g.dims() {
            return Err(Error::ShapeMismatch(format!(
                "parameter {:?} vs gradient {:?}",
                p.dims(),
                g.dims()
            )));
        }
    }
    if state.m.is_empty() {
        state.m = params
            .iter()
            .map(Tensor::zeros_like)
            .collect::<candle_core::Result<_>>()?;
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(Error::ShapeMismatch(
            "optimizer state does not match parameters".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let mut out = Vec::with_capacity(params.len());
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        // Detached so the moments never hold on to an autograd graph.
        let g = g.detach();
        let m = ((&state.m[i] * BETA1)? + (&g * (1.0 - BETA1))?)?;
        let v = ((&state.v[i] * BETA2)? + (g.sqr()? * (1.0 - BETA2))?)?;
        let m_hat = (&m / c1)?;
        let v_hat = (&v / c2)?;
        let update = (m_hat / (v_hat.sqrt()? + EPSILON)?)?;
        out.push((p.detach() - (update * lr)?)?);
        state.m[i] = m;
        state.v[i] = v;
    }
    Ok(out)
}

/// Adam bound to a fixed set of variables, with optional global-norm clipping.
#[derive(Debug)]
pub struct Adam {
    vars: Vec<Var>,
    state: AdamState,
    clip_norm: Option<f64>,
}

impl Adam {
    pub fn new(vars: Vec<Var>, clip_norm: Option<f64>) -> Self {
        Self {
            vars,
            state: AdamState::default(),
            clip_norm,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.state.step
    }

    /// Applies one update from the gradients recorded in `grads`. Variables
    /// without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, grads: &GradStore, lr: f64) -> Result<()> {
        let mut gs = Vec::with_capacity(self.vars.len());
        for var in &self.vars {
            gs.push(match grads.get(var.as_tensor()) {
                Some(g) => g.clone(),
                None => var.as_tensor().zeros_like()?,
            });
        }
        if let Some(max) = self.clip_norm {
            let mut sq = 0.0f64;
            for g in &gs {
                sq += g
                    .sqr()?
                    .sum_all()?
                    .to_dtype(candle_core::DType::F64)?
                    .to_scalar::<f64>()?;
            }
            let norm = sq.sqrt();
            if norm > max {
                let scale = max / norm;
                gs = gs
                    .iter()
                    .map(|g| g * scale)
                    .collect::<candle_core::Result<_>>()?;
            }
        }
        let params: Vec<Tensor> = self.vars.iter().map(|v| v.as_tensor().clone()).collect();
        let updated = optimizer_step(&params, &gs, lr, &mut self.state)?;
        for (var, new) in self.vars.iter().zip(updated) {
            var.set(&new)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use candle_core::{DType, Device};

    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::new(&[v], &Device::Cpu).unwrap()
    }

    fn value(t: &Tensor) -> f64 {
        t.to_dtype(DType::F64).unwrap().to_vec1::<f64>().unwrap()[0]
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut state = AdamState::default();
        let mut p = vec![scalar(0.37)];
        for _ in 0..5 {
            p = optimizer_step(&p, &[scalar(0.0)], 0.1, &mut state).unwrap();
        }
        assert_eq!(value(&p[0]), 0.37);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut state = AdamState::default();
        let p = optimizer_step(&[scalar(0.0)], &[scalar(1.0)], 0.1, &mut state).unwrap();
        // m_hat = 1, v_hat = 1: step = 0.1 / (1 + 1e-8).
        assert!((value(&p[0]) + 0.1 / (1.0 + EPSILON)).abs() < 1e-12);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let mut state = AdamState::default();
        let mut p = vec![scalar(0.0)];
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..2000 {
            p = optimizer_step(&p, &[scalar(0.5)], 0.01, &mut state).unwrap();
            let now = value(&p[0]);
            last_step = prev - now;
            prev = now;
        }
        assert!((last_step - 0.01).abs() < 1e-6, "{last_step}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut state = AdamState::default();
        let p = Tensor::zeros((2, 2), DType::F64, &Device::Cpu).unwrap();
        let g = Tensor::zeros((4,), DType::F64, &Device::Cpu).unwrap();
        assert!(optimizer_step(std::slice::from_ref(&p), &[g], 0.1, &mut state).is_err());
        assert!(optimizer_step(&[p], &[], 0.1, &mut state).is_err());
    }

    #[test]
    fn clipping_bounds_the_update_direction() {
        let var = Var::from_tensor(&Tensor::new(&[0.0f64, 0.0], &Device::Cpu).unwrap()).unwrap();
        let loss = (var.as_tensor() * 100.0).unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        let mut adam = Adam::new(vec![var.clone()], Some(5.0));
        adam.step(&grads, 0.1).unwrap();
        // Adam normalises magnitude, so each coordinate still moves by ~lr.
        let v = var.as_tensor().to_vec1::<f64>().unwrap();
        assert!(v.iter().all(|x| (x + 0.1).abs() < 1e-6), "{v:?}");
        assert_eq!(adam.steps_taken(), 1);
    }
}
