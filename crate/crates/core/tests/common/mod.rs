//! Independent scalar-loop oracles and small fixtures shared by the
//! integration suites.
#![allow(dead_code)]

pub mod suites;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS_LOG: f64 = 1e-7;
pub const EPS_DICE: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn binary_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
        .collect()
}

pub fn tensor(values: &[f64], shape: &[usize]) -> Tensor {
    Tensor::from_slice(values, shape, &Device::Cpu).unwrap()
}

pub fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}

fn clamp(p: f64) -> f64 {
    p.clamp(EPS_LOG, 1.0 - EPS_LOG)
}

/// `plain`, `restored`: n images of c*h*w values, channel-major.
pub fn oracle_mae(plain: &[f64], restored: &[f64], n: usize) -> f64 {
    let per = plain.len() / n;
    let mut total = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for k in 0..per {
            s += (plain[i * per + k] - restored[i * per + k]).abs();
        }
        total += s / per as f64;
    }
    total / n as f64
}

pub fn oracle_gen(d: &[f64]) -> f64 {
    d.iter().map(|&x| -clamp(x).ln()).sum::<f64>() / d.len() as f64
}

pub fn oracle_disc(dp: &[f64], dr: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&p, &r) in dp.iter().zip(dr) {
        s += -clamp(p).ln() - (1.0 - clamp(r)).ln();
    }
    s / dp.len() as f64
}

pub fn oracle_ce(pred: &[f64], gt: &[f64], n: usize) -> f64 {
    let per = pred.len() / n;
    let mut total = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for k in 0..per {
            let p = clamp(pred[i * per + k]);
            let g = gt[i * per + k];
            s -= g * p.ln() + (1.0 - g) * (1.0 - p).ln();
        }
        total += s / per as f64;
    }
    total / n as f64
}

pub fn oracle_dice(pred: &[f64], gt: &[f64], n: usize) -> f64 {
    let per = pred.len() / n;
    let mut total = 0.0;
    for i in 0..n {
        let (mut inter, mut pp, mut gg) = (0.0, 0.0, 0.0);
        for k in 0..per {
            let (p, g) = (pred[i * per + k], gt[i * per + k]);
            inter += p * g;
            pp += p * p;
            gg += g * g;
        }
        total += 1.0 - 2.0 * inter / (pp + gg + EPS_DICE);
    }
    total / n as f64
}

pub fn oracle_loc(pred: &[f64], gt: &[f64], n: usize, ce_weight: f64) -> f64 {
    ce_weight * oracle_ce(pred, gt, n) + (1.0 - ce_weight) * oracle_dice(pred, gt, n)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

pub fn oracle_counts(pred: &[u8], gt: &[u8]) -> Counts {
    let mut c = Counts::default();
    for (&p, &g) in pred.iter().zip(gt) {
        match (p, g) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    c
}

pub fn oracle_f1(c: Counts) -> f64 {
    let d = 2 * c.tp + c.fp + c.fn_;
    if d == 0 {
        0.0
    } else {
        2.0 * c.tp as f64 / d as f64
    }
}

pub fn oracle_iou(c: Counts) -> f64 {
    let d = c.tp + c.fp + c.fn_;
    if d == 0 {
        0.0
    } else {
        c.tp as f64 / d as f64
    }
}

/// Share of (tampered, original) pairs where the tampered score is higher,
/// ties counting one half.
pub fn oracle_auc(scores: &[f32], gt: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &gi) in gt.iter().enumerate() {
        if gi != 1 {
            continue;
        }
        for (j, &gj) in gt.iter().enumerate() {
            if gj != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Minimum-cost perfect matching of a square cost matrix (Hungarian method).
pub fn assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let inf = f64::INFINITY;
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let (mut p, mut way) = (vec![0usize; n + 1], vec![0usize; n + 1]);
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}

/// Exact earth mover's distance between two equal-size point sets.
pub fn exact_emd(a: &[Vec<f32>], b: &[Vec<f32>]) -> f64 {
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|x| {
            b.iter()
                .map(|y| {
                    x.iter()
                        .zip(y)
                        .map(|(p, q)| (f64::from(*p) - f64::from(*q)).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect();
    assignment_cost(&cost) / a.len() as f64
}

/// Central difference of `f` with respect to element `idx` of `var`.
pub fn central_difference(var: &Var, idx: usize, h: f64, f: &mut dyn FnMut() -> f64) -> f64 {
    let shape = var.dims().to_vec();
    let base: Vec<f64> = var
        .flatten_all()
        .unwrap()
        .to_dtype(DType::F64)
        .unwrap()
        .to_vec1()
        .unwrap();
    let set = |vals: &[f64]| {
        let t = Tensor::from_slice(vals, shape.as_slice(), &Device::Cpu)
            .unwrap()
            .to_dtype(var.dtype())
            .unwrap();
        var.set(&t).unwrap();
    };
    let mut plus = base.clone();
    plus[idx] += h;
    set(&plus);
    let fp = f();
    let mut minus = base.clone();
    minus[idx] -= h;
    set(&minus);
    let fm = f();
    set(&base);
    (fp - fm) / (2.0 * h)
}

/// `|a - b| <= rel * max(|a|, |b|) + floor`.
pub fn close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + floor
}
