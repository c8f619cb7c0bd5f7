//! Restoration and localization objectives.
//!
//! Every function takes batch-first tensors, evaluates the per-image loss and
//! returns the batch mean as a scalar tensor, so the results can be
//! backpropagated directly. Logarithms are natural.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Weights of the composite losses and the stabilising constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Cross-entropy share of the localization loss; dice gets the rest.
    pub ce: f64,
    /// Pixel MAE weight in the restoration loss.
    pub mae: f64,
    /// Adversarial (generator) weight in the restoration loss.
    pub adversarial: f64,
    /// Localization-loss weight in the restoration loss.
    pub forensic: f64,
    pub eps_dice: f64,
    pub eps_log: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ce: 0.2,
            mae: 100.0,
            adversarial: 1.0,
            forensic: 0.05,
            eps_dice: 1e-6,
            eps_log: 1e-7,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ce) {
            return Err(invalid!(
                "cross-entropy weight must be in [0, 1], got {}",
                self.ce
            ));
        }
        for (name, w) in [
            ("mae", self.mae),
            ("adversarial", self.adversarial),
            ("forensic", self.forensic),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid!("{name} weight must be non-negative, got {w}"));
            }
        }
        for (name, e) in [("eps_dice", self.eps_dice), ("eps_log", self.eps_log)] {
            if !(e > 0.0 && e <= 1e-3) {
                return Err(invalid!("{name} must be in (0, 1e-3], got {e}"));
            }
        }
        Ok(())
    }
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// `(N, ...)` to `(N, M)`.
fn per_image(t: &Tensor) -> Result<Tensor> {
    let n = t.dims().first().copied().unwrap_or(1);
    Ok(t.reshape((n, ()))?)
}

/// Mean absolute difference between plain and restored images. Channels are
/// averaged jointly with pixels, so the value stays in `[0, 1]`.
pub fn loss_mae(plain: &Tensor, restored: &Tensor) -> Result<Tensor> {
    same_shape(plain, restored)?;
    let per = per_image(&(plain - restored)?.abs()?)?.mean(1)?;
    Ok(per.mean_all()?)
}

/// Generator loss `-ln D(restored)`, batch mean.
pub fn loss_gen(d_restored: &Tensor, eps_log: f64) -> Result<Tensor> {
    let d = d_restored.clamp(eps_log, 1.0 - eps_log)?;
    Ok(d.log()?.neg()?.mean_all()?)
}

/// Discriminator loss `-ln D(plain) - ln(1 - D(restored))`, batch mean.
pub fn loss_disc(d_plain: &Tensor, d_restored: &Tensor, eps_log: f64) -> Result<Tensor> {
    same_shape(d_plain, d_restored)?;
    let p = d_plain.clamp(eps_log, 1.0 - eps_log)?;
    let r = d_restored.clamp(eps_log, 1.0 - eps_log)?;
    let per = (p.log()? + r.affine(-1.0, 1.0)?.log()?)?.neg()?;
    Ok(per.mean_all()?)
}

/// Pixel-wise binary cross-entropy, averaged per image then over the batch.
pub fn loss_ce(pred: &Tensor, gt: &Tensor, eps_log: f64) -> Result<Tensor> {
    same_shape(pred, gt)?;
    let p = per_image(&pred.clamp(eps_log, 1.0 - eps_log)?)?;
    let g = per_image(gt)?;
    let pos = (&g * p.log()?)?;
    let neg = (g.affine(-1.0, 1.0)? * p.affine(-1.0, 1.0)?.log()?)?;
    Ok((pos + neg)?.neg()?.mean(1)?.mean_all()?)
}

/// `1 - 2 sum(P*G) / (sum(P^2) + sum(G^2) + eps)` per image, batch mean.
pub fn loss_dice(pred: &Tensor, gt: &Tensor, eps_dice: f64) -> Result<Tensor> {
    same_shape(pred, gt)?;
    let p = per_image(pred)?;
    let g = per_image(gt)?;
    let inter = (&p * &g)?.sum(1)?;
    let denom = ((p.sqr()?.sum(1)? + g.sqr()?.sum(1)?)? + eps_dice)?;
    let ratio = (inter * 2.0)?.div(&denom)?;
    Ok(ratio.affine(-1.0, 1.0)?.mean_all()?)
}

/// `ce_weight * ce + (1 - ce_weight) * dice`.
pub fn weighted_loc(ce: &Tensor, dice: &Tensor, ce_weight: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&ce_weight) {
        return Err(invalid!(
            "cross-entropy weight must be in [0, 1], got {ce_weight}"
        ));
    }
    Ok(((ce * ce_weight)? + (dice * (1.0 - ce_weight))?)?)
}

/// Localization loss: convex combination of cross-entropy and dice.
pub fn loss_loc(pred: &Tensor, gt: &Tensor, weights: &LossWeights) -> Result<Tensor> {
    let ce = loss_ce(pred, gt, weights.eps_log)?;
    let dice = loss_dice(pred, gt, weights.eps_dice)?;
    weighted_loc(&ce, &dice, weights.ce)
}

/// Restoration loss `mae_w * mae + adv_w * gen + forensic_w * loc`.
pub fn loss_restore(
    mae: &Tensor,
    gen: &Tensor,
    loc: &Tensor,
    mae_weight: f64,
    adversarial_weight: f64,
    forensic_weight: f64,
) -> Result<Tensor> {
    for w in [mae_weight, adversarial_weight, forensic_weight] {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(invalid!(
                "restoration loss weights must be non-negative, got {w}"
            ));
        }
    }
    Ok(((mae * mae_weight)? + (gen * adversarial_weight)?)?.add(&(loc * forensic_weight)?)?)
}

#[cfg(test)]
mod tests {
    use candle_core::{DType, Device};

    use super::*;

    fn t(values: &[f64], shape: &[usize]) -> Tensor {
        Tensor::from_slice(values, shape, &Device::Cpu).unwrap()
    }

    fn scalar(x: &Tensor) -> f64 {
        x.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
    }

    const EPS_LOG: f64 = 1e-7;

    #[test]
    fn mae_cases() {
        let a = t(&[0.5; 48], &[1, 3, 4, 4]);
        let b = t(&[0.25; 48], &[1, 3, 4, 4]);
        assert_eq!(scalar(&loss_mae(&a, &a).unwrap()), 0.0);
        assert!((scalar(&loss_mae(&a, &b).unwrap()) - 0.25).abs() < 1e-15);
        assert!(loss_mae(&a, &t(&[0.5; 12], &[1, 3, 2, 2])).is_err());
    }

    #[test]
    fn generator_cases() {
        let at = |d: f64| scalar(&loss_gen(&t(&[d], &[1]), EPS_LOG).unwrap());
        assert!(at(1.0 - EPS_LOG) < 1.1e-7);
        assert!((at(0.5) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((at(1e-12) + EPS_LOG.ln()).abs() < 1e-9);
        assert!(at(0.0).is_finite());
    }

    #[test]
    fn discriminator_cases() {
        let at =
            |p: f64, r: f64| scalar(&loss_disc(&t(&[p], &[1]), &t(&[r], &[1]), EPS_LOG).unwrap());
        assert!((at(0.5, 0.5) - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(at(1.0, 0.0) < 1e-6);
        let (p, r) = (0.73, 0.18);
        assert!((at(p, r) - (-p.ln() - (1.0 - r).ln())).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_cases() {
        let gt = t(&[1.0, 0.0, 0.0, 1.0], &[1, 1, 2, 2]);
        let perfect = loss_ce(&gt, &gt, EPS_LOG).unwrap();
        assert!((scalar(&perfect) + (1.0 - EPS_LOG).ln()).abs() < 1e-12);
        let half = t(&[0.5; 4], &[1, 1, 2, 2]);
        assert!(
            (scalar(&loss_ce(&half, &gt, EPS_LOG).unwrap()) - std::f64::consts::LN_2).abs() < 1e-12
        );
    }

    #[test]
    fn dice_cases() {
        let eps = 1e-6;
        let ones = t(&[1.0; 16], &[1, 1, 4, 4]);
        let v = scalar(&loss_dice(&ones, &ones, eps).unwrap());
        assert!((v - (1.0 - 32.0 / (32.0 + eps))).abs() < 1e-15);
        let mut g = [0.0; 16];
        g[..8].fill(1.0);
        let mut p = [0.0; 16];
        p[8..].fill(1.0);
        let disjoint = loss_dice(&t(&p, &[1, 1, 4, 4]), &t(&g, &[1, 1, 4, 4]), eps).unwrap();
        assert_eq!(scalar(&disjoint), 1.0);
        let zeros = t(&[0.0; 16], &[1, 1, 4, 4]);
        assert_eq!(scalar(&loss_dice(&zeros, &zeros, eps).unwrap()), 1.0);
    }

    #[test]
    fn localization_combination() {
        let w = LossWeights::default();
        let pred = t(&[0.9, 0.2, 0.4, 0.7], &[1, 1, 2, 2]);
        let gt = t(&[1.0, 0.0, 0.0, 1.0], &[1, 1, 2, 2]);
        let ce = scalar(&loss_ce(&pred, &gt, w.eps_log).unwrap());
        let dice = scalar(&loss_dice(&pred, &gt, w.eps_dice).unwrap());
        let at = |l1: f64| scalar(&loss_loc(&pred, &gt, &LossWeights { ce: l1, ..w }).unwrap());
        assert_eq!(at(1.0), ce);
        assert_eq!(at(0.0), dice);
        let combined = weighted_loc(&t(&[0.5], &[]), &t(&[0.3], &[]), 0.2).unwrap();
        assert!((scalar(&combined) - 0.34).abs() < 1e-12);
        assert!(weighted_loc(&t(&[0.5], &[]), &t(&[0.3], &[]), 1.5).is_err());
    }

    #[test]
    fn restoration_combination() {
        let (mae, gen, loc) = (t(&[0.01], &[]), t(&[0.7], &[]), t(&[0.4], &[]));
        let zero = loss_restore(&mae, &gen, &loc, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(scalar(&zero), 0.0);
        let a = loss_restore(&mae, &gen, &loc, 100.0, 1.0, 0.05).unwrap();
        assert!((scalar(&a) - 1.72).abs() < 1e-12);
        let b = loss_restore(&mae, &gen, &loc, 100.0, 1.0, 0.1).unwrap();
        assert!((scalar(&b) - 1.74).abs() < 1e-12);
        assert!(loss_restore(&mae, &gen, &loc, -1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn weight_validation() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights {
            ce: 1.2,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LossWeights {
            forensic: -0.1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LossWeights {
            eps_log: 0.1,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
