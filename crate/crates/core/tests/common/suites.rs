//! Checks reused by the module suites and the acceptance run. Each returns a
//! summary line on success and a description of the first failure otherwise.
#![allow(dead_code)]

use candle_core::Var;
use rand::Rng;

use tamperloc::dataio::{synth_samples, Image, Mask, ProbabilityMap, Role, Sample, SynthConfig};
use tamperloc::inference::{sliding_window_predict, tile_origins, WindowSpec};
use tamperloc::losses::*;
use tamperloc::metrics::{auc, confusion, f1, iou, threshold_map};
use tamperloc::nets::*;
use tamperloc::training::*;

use super::*;

pub type Check = std::result::Result<String, String>;

const ORACLE_TOL: f64 = 1e-9;

/// All seven losses against scalar loops on `instances` random 4x4 cases.
pub fn loss_oracles(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let (n, c, h, w) = (2, 3, 4, 4);
    let img = n * c * h * w;
    let map = n * h * w;
    let weights = LossWeights::default();
    let mut errors: Vec<(&str, f64)> = ["mae", "gen", "disc", "ce", "dice", "loc", "restore"]
        .iter()
        .map(|k| (*k, 0.0))
        .collect();
    let mut bump = |k: usize, e: f64| errors[k].1 = errors[k].1.max(e);
    for _ in 0..instances {
        let plain = uniform_vec(&mut r, img, 0.0, 1.0);
        let restored = uniform_vec(&mut r, img, 0.0, 1.0);
        let pred = uniform_vec(&mut r, map, 0.0, 1.0);
        let gt = binary_vec(&mut r, map);
        let dp = uniform_vec(&mut r, 4, 0.0, 1.0);
        let dr = uniform_vec(&mut r, 4, 0.0, 1.0);
        let tp = tensor(&plain, &[n, c, h, w]);
        let tr = tensor(&restored, &[n, c, h, w]);
        let tpred = tensor(&pred, &[n, 1, h, w]);
        let tgt = tensor(&gt, &[n, 1, h, w]);
        let tdp = tensor(&dp, &[4, 1]);
        let tdr = tensor(&dr, &[4, 1]);

        let mae = loss_mae(&tp, &tr).map_err(|e| e.to_string())?;
        let gen = loss_gen(&tdr, EPS_LOG).map_err(|e| e.to_string())?;
        let disc = loss_disc(&tdp, &tdr, EPS_LOG).map_err(|e| e.to_string())?;
        let ce = loss_ce(&tpred, &tgt, EPS_LOG).map_err(|e| e.to_string())?;
        let dice = loss_dice(&tpred, &tgt, EPS_DICE).map_err(|e| e.to_string())?;
        let loc = loss_loc(&tpred, &tgt, &weights).map_err(|e| e.to_string())?;
        let total = loss_restore(
            &mae,
            &gen,
            &loc,
            weights.mae,
            weights.adversarial,
            weights.forensic,
        )
        .map_err(|e| e.to_string())?;

        let o_mae = oracle_mae(&plain, &restored, n);
        let o_gen = oracle_gen(&dr);
        let o_loc = oracle_loc(&pred, &gt, n, weights.ce);
        bump(0, (scalar(&mae) - o_mae).abs());
        bump(1, (scalar(&gen) - o_gen).abs());
        bump(2, (scalar(&disc) - oracle_disc(&dp, &dr)).abs());
        bump(3, (scalar(&ce) - oracle_ce(&pred, &gt, n)).abs());
        bump(4, (scalar(&dice) - oracle_dice(&pred, &gt, n)).abs());
        bump(5, (scalar(&loc) - o_loc).abs());
        let o_total = weights.mae * o_mae + weights.adversarial * o_gen + weights.forensic * o_loc;
        bump(6, (scalar(&total) - o_total).abs());
    }
    let summary: Vec<String> = errors.iter().map(|(k, e)| format!("{k} {e:.1e}")).collect();
    if errors.iter().all(|(_, e)| *e <= ORACLE_TOL) {
        Ok(format!(
            "max |loss - oracle| over {instances} instances: {}",
            summary.join(", ")
        ))
    } else {
        Err(format!(
            "oracle mismatch above {ORACLE_TOL:e}: {}",
            summary.join(", ")
        ))
    }
}

const FD_STEP: f64 = 1e-4;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_FLOOR: f64 = 1e-10;

/// Largest relative disagreement between backprop and central differences
/// of `loss` with respect to every element of `var`.
fn grad_error(var: &Var, loss: &dyn Fn() -> candle_core::Tensor) -> f64 {
    let grads = loss().backward().unwrap();
    let g: Vec<f64> = grads
        .get(var.as_tensor())
        .unwrap()
        .flatten_all()
        .unwrap()
        .to_vec1()
        .unwrap();
    let mut worst = 0.0f64;
    for (i, &analytic) in g.iter().enumerate() {
        let numeric = central_difference(var, i, FD_STEP, &mut || scalar(&loss()));
        let err = (analytic - numeric).abs()
            / (analytic.abs().max(numeric.abs()) + GRAD_FLOOR / GRAD_REL_TOL);
        worst = worst.max(err);
    }
    worst
}

fn var(values: &[f64], shape: &[usize]) -> Var {
    Var::from_tensor(&tensor(values, shape)).unwrap()
}

/// Backprop against finite differences for every loss on 8x8 instances.
pub fn loss_gradients(seed: u64) -> Check {
    let mut r = rng(seed);
    let (n, c, h, w) = (2, 3, 8, 8);
    let weights = LossWeights::default();
    let plain = uniform_vec(&mut r, n * c * h * w, 0.0, 1.0);
    // Keep every |plain - restored| well away from the kink of |x|.
    let restored: Vec<f64> = plain
        .iter()
        .map(|&p| {
            let d = r.random_range(0.01..0.3);
            if p > 0.5 {
                p - d
            } else {
                p + d
            }
        })
        .collect();
    let pred = uniform_vec(&mut r, n * h * w, 0.1, 0.9);
    let gt = binary_vec(&mut r, n * h * w);
    let dp = uniform_vec(&mut r, h * w, 0.1, 0.9);
    let dr = uniform_vec(&mut r, h * w, 0.1, 0.9);
    let tp = tensor(&plain, &[n, c, h, w]);
    let tgt = tensor(&gt, &[n, 1, h, w]);
    let tdp = tensor(&dp, &[h, w]);

    let vr = var(&restored, &[n, c, h, w]);
    let vp = var(&pred, &[n, 1, h, w]);
    let vd = var(&dr, &[h, w]);
    let mut results = vec![
        (
            "mae",
            grad_error(&vr, &|| loss_mae(&tp, vr.as_tensor()).unwrap()),
        ),
        (
            "gen",
            grad_error(&vd, &|| loss_gen(vd.as_tensor(), EPS_LOG).unwrap()),
        ),
        (
            "disc",
            grad_error(&vd, &|| loss_disc(&tdp, vd.as_tensor(), EPS_LOG).unwrap()),
        ),
        (
            "ce",
            grad_error(&vp, &|| loss_ce(vp.as_tensor(), &tgt, EPS_LOG).unwrap()),
        ),
        (
            "dice",
            grad_error(&vp, &|| loss_dice(vp.as_tensor(), &tgt, EPS_DICE).unwrap()),
        ),
        (
            "loc",
            grad_error(&vp, &|| loss_loc(vp.as_tensor(), &tgt, &weights).unwrap()),
        ),
    ];
    let restore = || {
        let mae = loss_mae(&tp, vr.as_tensor()).unwrap();
        let gen = loss_gen(vd.as_tensor(), EPS_LOG).unwrap();
        let loc = loss_loc(vp.as_tensor(), &tgt, &weights).unwrap();
        loss_restore(
            &mae,
            &gen,
            &loc,
            weights.mae,
            weights.adversarial,
            weights.forensic,
        )
        .unwrap()
    };
    results.push(("restore/image", grad_error(&vr, &restore)));
    results.push(("restore/map", grad_error(&vp, &restore)));
    results.push(("restore/disc", grad_error(&vd, &restore)));
    let summary: Vec<String> = results
        .iter()
        .map(|(k, e)| format!("{k} {e:.1e}"))
        .collect();
    if results.iter().all(|(_, e)| *e <= GRAD_REL_TOL) {
        Ok(format!(
            "max relative gradient error: {}",
            summary.join(", ")
        ))
    } else {
        Err(format!(
            "gradient mismatch above {GRAD_REL_TOL:e}: {}",
            summary.join(", ")
        ))
    }
}

/// Random 8x8 ground truth with both classes and a score map with ties.
pub fn random_metric_case(r: &mut ChaCha8Rng) -> (Mask, ProbabilityMap) {
    let mut gt: Vec<u8> = (0..64).map(|_| u8::from(r.random_bool(0.4))).collect();
    if gt.iter().all(|&v| v == gt[0]) {
        gt[0] ^= 1;
    }
    let scores: Vec<f32> = (0..64)
        .map(|_| r.random_range(1..16) as f32 / 16.0)
        .collect();
    (
        Mask::new(8, 8, gt).unwrap(),
        ProbabilityMap::new(8, 8, scores).unwrap(),
    )
}

/// F1, IOU and AUC against brute force on `instances` random 8x8 cases.
pub fn metric_oracles(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut auc_err = 0.0f64;
    for k in 0..instances {
        let (gt, prob) = random_metric_case(&mut r);
        let pred = threshold_map(&prob, 0.5).map_err(|e| e.to_string())?;
        let c = confusion(&pred, &gt).map_err(|e| e.to_string())?;
        let o = oracle_counts(pred.data(), gt.data());
        if (c.tp, c.fp, c.fn_, c.tn) != (o.tp, o.fp, o.fn_, o.tn) {
            return Err(format!("instance {k}: counts {c:?} vs oracle {o:?}"));
        }
        if f1(&c) != oracle_f1(o) || iou(&c) != oracle_iou(o) {
            return Err(format!("instance {k}: F1/IOU differ from the oracle"));
        }
        if f1(&c) < iou(&c) {
            return Err(format!("instance {k}: F1 {} < IOU {}", f1(&c), iou(&c)));
        }
        let a = auc(&prob, &gt).map_err(|e| e.to_string())?;
        auc_err = auc_err.max((a - oracle_auc(prob.data(), gt.data())).abs());
    }
    if auc_err <= 1e-12 {
        Ok(format!("{instances} instances: F1/IOU exact, max AUC error {auc_err:.1e}, F1 >= IOU throughout"))
    } else {
        Err(format!("AUC error {auc_err:e} exceeds 1e-12"))
    }
}

pub fn tiny_config(mode: TrainMode, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        mode,
        epochs,
        seed,
        batch_size: 4,
        block_size: 32,
        blocks_per_image: 1,
        lr_restore: 1e-3,
        lr_disc: 1e-3,
        lr_loc: 3e-3,
        restoration: RestorationConfig {
            base_width: 4,
            depth: 2,
            residual: true,
        },
        localization: LocalizationConfig {
            base_width: 4,
            depth: 2,
            highpass: true,
        },
        disc_width: 4,
        disc_stages: 2,
        ..TrainConfig::default()
    }
}

pub fn tiny_samples(n: usize, seed: u64) -> Vec<Sample> {
    synth_samples(n, 64, seed, &SynthConfig::default()).unwrap()
}

pub fn plain_checkpoint(samples: &[Sample], seed: u64) -> Checkpoint {
    let out = pretrain_plain(samples, &tiny_config(TrainMode::PretrainPlain, 1, seed)).unwrap();
    out.localizer_checkpoint(seed).unwrap()
}

/// Alternate-schedule exclusivity over `epochs` epochs plus the forensic-weight ablation.
pub fn alternate_schedule(epochs: usize) -> Check {
    let samples = tiny_samples(8, 11);
    let init = plain_checkpoint(&samples, 3);
    let cfg = tiny_config(TrainMode::RelocAlternate, epochs, 5);
    let mut trainer =
        Trainer::new(cfg.clone(), &samples, Some(&init)).map_err(|e| e.to_string())?;
    let mut prev = [
        trainer.restorer().unwrap().digest().unwrap(),
        trainer.discriminator().unwrap().digest().unwrap(),
        trainer.localizer().digest().unwrap(),
    ];
    for epoch in 1..=epochs {
        let log = trainer.run_epoch().map_err(|e| e.to_string())?;
        let now = [
            log.digests[&Component::Restoration].clone(),
            log.digests[&Component::Discriminator].clone(),
            log.digests[&Component::Localization].clone(),
        ];
        let changed: Vec<bool> = prev.iter().zip(&now).map(|(a, b)| a != b).collect();
        let want = if epoch % 2 == 1 {
            [true, true, false]
        } else {
            [false, false, true]
        };
        if changed != want {
            return Err(format!(
                "epoch {epoch}: R/D/L changed {changed:?}, expected {want:?}"
            ));
        }
        prev = now;
    }

    let one = |forensic: f64| -> std::result::Result<String, String> {
        let mut c = tiny_config(TrainMode::RelocAlternate, 1, 5);
        c.weights.forensic = forensic;
        let mut t = Trainer::new(c, &samples, Some(&init)).map_err(|e| e.to_string())?;
        let log = t.run_epoch().map_err(|e| e.to_string())?;
        Ok(log.digests[&Component::Restoration].clone())
    };
    let (without, with) = (one(0.0)?, one(cfg.weights.forensic)?);
    if without == with {
        return Err("forensic weight 0 and > 0 gave the same restorer".into());
    }
    Ok(format!(
        "{epochs} epochs: L frozen in odd epochs, R and D frozen in even epochs; forensic-weight ablation changes the restorer"
    ))
}

/// Stitching agrees with direct inference and with a hand-built overlap layout.
pub fn sliding_window_consistency() -> Check {
    let loc = LocalizationNet::new(
        LocalizationConfig {
            base_width: 4,
            depth: 2,
            highpass: true,
        },
        9,
    )
    .map_err(|e| e.to_string())?;
    let mut r = rng(21);
    let spec = WindowSpec::default();
    let random_image = |r: &mut ChaCha8Rng, h: usize, w: usize| {
        Image::new(
            h,
            w,
            (0..h * w * 3)
                .map(|_| r.random_range(0.0f32..1.0))
                .collect(),
            Role::Plain,
        )
        .unwrap()
    };

    let square = random_image(&mut r, 512, 512);
    let stitched = sliding_window_predict(&loc, &square, &spec, None).map_err(|e| e.to_string())?;
    let direct = loc.localize(&square).map_err(|e| e.to_string())?;
    if stitched.data() != direct.data() {
        return Err("512x512 stitched output differs from direct inference".into());
    }

    let wide = random_image(&mut r, 512, 600);
    let cols = tile_origins(600, 512, 512);
    if cols != [0, 88] {
        return Err(format!("600-wide layout is {cols:?}, expected [0, 88]"));
    }
    let left = loc.localize(&wide.crop(0, 0, 512, 512).unwrap()).unwrap();
    let right = loc.localize(&wide.crop(0, 88, 512, 512).unwrap()).unwrap();
    let got = sliding_window_predict(&loc, &wide, &spec, None).map_err(|e| e.to_string())?;
    for row in 0..512 {
        for col in 0..600 {
            let want = match col {
                c if c < 88 => left.get(row, c),
                c if c >= 512 => right.get(row, c - 88),
                c => {
                    ((f64::from(left.get(row, c)) + f64::from(right.get(row, c - 88))) / 2.0) as f32
                }
            };
            if got.get(row, col) != want {
                return Err(format!(
                    "600x512 pixel ({row}, {col}) is {} not {want}",
                    got.get(row, col)
                ));
            }
        }
    }
    Ok("512x512 bit-exact; 600 px wide uses tiles {0, 88} with the overlap averaged".into())
}
