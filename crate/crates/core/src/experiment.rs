//! Toy-scale experiment: trains every regime once on a synthetic corpus and
//! collects the numbers needed to compare them.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{
    jpeg_distort, split_samples, synth_samples, DegradationSpec, Image, Mask, Sample, SynthConfig,
};
use crate::error::{invalid, Result};
use crate::inference::{Pipeline, WindowSpec};
use crate::metrics::{aggregate, analyze_separability, evaluate_image, MetricsReport, Situation};
use crate::nets::{
    Component, LocalizationConfig, LocalizationNet, Network, RestorationConfig, RestorationNet,
};
use crate::training::{TrainConfig, TrainMode, TrainOutcome, Trainer};

/// Scores `pipeline` on `samples`. Inputs are the plain images for
/// `M^P{I^P}`; otherwise they are JPEG-compressed at `qf`, or taken from the
/// stored distorted images when `qf` is `None`.
pub fn evaluate_samples(
    pipeline: &Pipeline,
    samples: &[Sample],
    situation: Situation,
    qf: Option<u8>,
) -> Result<MetricsReport> {
    let mut images = Vec::with_capacity(samples.len());
    for s in samples {
        let input = distorted_input(s, situation.distorted_input(), qf)?;
        let pred = pipeline.predict(&input)?;
        images.push(evaluate_image(
            &s.id,
            &pred.prob,
            &s.mask,
            pipeline.threshold,
        )?);
    }
    aggregate(situation, images)
}

fn distorted_input(s: &Sample, distorted: bool, qf: Option<u8>) -> Result<Image> {
    match (distorted, qf) {
        (false, _) => Ok(s.plain.clone()),
        (true, Some(q)) => jpeg_distort(&s.plain, q),
        (true, None) => Ok(s.distorted()?.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub n_images: usize,
    pub image_size: usize,
    pub data_seed: u64,
    pub train_frac: f64,
    pub synth: SynthConfig,
    /// Template for every regime; mode, epochs, seed and degradation are overridden.
    pub train: TrainConfig,
    /// Epochs of plain pre-training and of distorted fine-tuning.
    pub epochs: usize,
    /// Epochs of alternate training; half of them update the localizer.
    pub reloc_epochs: usize,
    pub joint_epochs: usize,
    pub fixed_qf: u8,
    pub uniform_qf: (u8, u8),
    pub eval_qfs: Vec<u8>,
    pub seed_a: u64,
    pub seed_b: u64,
    pub n_per_class: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n_images: 200,
            image_size: 64,
            data_seed: 7,
            train_frac: 0.8,
            synth: SynthConfig::default(),
            train: TrainConfig {
                batch_size: 8,
                block_size: 32,
                blocks_per_image: 1,
                lr_restore: 1e-3,
                lr_disc: 1e-3,
                lr_loc: 3e-3,
                restoration: RestorationConfig {
                    base_width: 8,
                    depth: 2,
                    residual: true,
                },
                localization: LocalizationConfig {
                    base_width: 8,
                    depth: 2,
                    highpass: true,
                },
                disc_width: 8,
                disc_stages: 3,
                disc_highpass: true,
                ..TrainConfig::default()
            },
            epochs: 16,
            reloc_epochs: 32,
            joint_epochs: 16,
            fixed_qf: 75,
            uniform_qf: (70, 100),
            eval_qfs: vec![60, 70, 80],
            seed_a: 1,
            seed_b: 2,
            n_per_class: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QfRow {
    pub qf: u8,
    pub plain: f64,
    pub finetuned: f64,
    pub reloc: f64,
}

/// Mean test F1 values, separability distances and validation trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyResults {
    pub n_train: usize,
    pub n_test: usize,
    pub plain_on_plain: f64,
    pub plain_on_distorted: f64,
    pub finetuned_on_distorted: f64,
    pub reloc_on_distorted: f64,
    /// Run B's plain model alone and behind run A's restorer.
    pub plain_b_on_distorted: f64,
    pub transfer_on_distorted: f64,
    /// Mean absolute error to the plain test images.
    pub distorted_mae: f64,
    pub restored_mae: f64,
    /// Original/tampered feature distance for each situation.
    pub separability: Vec<EmdRow>,
    /// Validation localization loss after each localizer update pass.
    pub alternate_val_loc: Vec<f64>,
    pub joint_val_loc: Vec<f64>,
    /// Uniform-QF regime evaluated at each of `eval_qfs`.
    pub multi_qf: Vec<QfRow>,
    pub seconds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmdRow {
    pub situation: Situation,
    /// On the encoder outputs as produced.
    pub emd: f64,
    /// After pooled per-dimension standardization.
    pub emd_standardized: f64,
}

impl ToyResults {
    pub fn emd(&self, situation: Situation) -> Option<&EmdRow> {
        self.separability.iter().find(|r| r.situation == situation)
    }
}

pub struct ToyCorpus {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl ToyConfig {
    pub fn corpus(&self) -> Result<ToyCorpus> {
        let all = synth_samples(self.n_images, self.image_size, self.data_seed, &self.synth)?;
        let (train, test) = split_samples(&all, self.train_frac, self.data_seed)?;
        if test.is_empty() {
            return Err(invalid!("the test split is empty"));
        }
        Ok(ToyCorpus { train, test })
    }

    fn regime(
        &self,
        mode: TrainMode,
        epochs: usize,
        seed: u64,
        degradation: DegradationSpec,
    ) -> TrainConfig {
        TrainConfig {
            mode,
            epochs,
            seed,
            degradation,
            ..self.train.clone()
        }
    }

    fn window(&self) -> Result<WindowSpec> {
        WindowSpec::new(self.image_size, self.image_size)
    }
}

fn train(
    cfg: TrainConfig,
    samples: &[Sample],
    init: Option<&crate::nets::Checkpoint>,
    label: &str,
    log: &mut dyn FnMut(&str),
) -> Result<TrainOutcome> {
    let total = cfg.epochs;
    Trainer::new(cfg, samples, init)?.run(|l| {
        let mut parts: Vec<String> = l
            .val_losses
            .iter()
            .map(|(k, v)| format!("val_{k} {v:.4}"))
            .collect();
        parts.extend(l.losses.iter().map(|(k, v)| format!("{k} {v:.4}")));
        log(&format!(
            "{label} epoch {}/{total}: {}",
            l.epoch,
            parts.join(", ")
        ));
        Ok(())
    })
}

fn val_loc_trajectory(outcome: &TrainOutcome) -> Vec<f64> {
    outcome
        .logs
        .iter()
        .filter(|l| l.updated_modules.contains(&Component::Localization))
        .filter_map(|l| l.val_losses.get("loc").copied())
        .collect()
}

fn restorer_of(outcome: TrainOutcome) -> Result<(LocalizationNet, RestorationNet)> {
    let r = outcome
        .restorer
        .ok_or_else(|| invalid!("regime produced no restorer"))?;
    Ok((outcome.localizer, r))
}

/// Runs every regime and evaluates it; `log` receives progress lines.
pub fn run_toy(cfg: &ToyConfig, log: &mut dyn FnMut(&str)) -> Result<ToyResults> {
    let corpus = cfg.corpus()?;
    let (train_set, test) = (&corpus.train, &corpus.test);
    let window = cfg.window()?;
    let fixed = DegradationSpec::fixed(cfg.fixed_qf)?;
    let uniform = DegradationSpec::uniform(cfg.uniform_qf.0, cfg.uniform_qf.1)?;
    let mut seconds = BTreeMap::new();
    let mut timed = |name: &str, start: Instant| {
        seconds.insert(name.to_string(), start.elapsed().as_secs_f64());
    };
    let f1 = |pipe: &Pipeline, sit: Situation, qf: u8| -> Result<f64> {
        Ok(evaluate_samples(pipe, test, sit, Some(qf))?.mean_f1)
    };
    let solo = |loc: &LocalizationNet| -> Result<Pipeline> {
        Ok(Pipeline::new(loc.duplicate()?, None, window))
    };
    let paired = |loc: &LocalizationNet, r: &RestorationNet| -> Result<Pipeline> {
        Ok(Pipeline::new(
            loc.duplicate()?,
            Some(r.duplicate()?),
            window,
        ))
    };

    let t = Instant::now();
    let mp = train(
        cfg.regime(TrainMode::PretrainPlain, cfg.epochs, cfg.seed_a, fixed),
        train_set,
        None,
        "plain A",
        log,
    )?;
    let mp_ckpt = mp.localizer_checkpoint(cfg.seed_a)?;
    timed("plain_a", t);

    let t = Instant::now();
    let dp = train(
        cfg.regime(TrainMode::FinetuneDistorted, cfg.epochs, cfg.seed_a, fixed),
        train_set,
        Some(&mp_ckpt),
        "finetune",
        log,
    )?;
    timed("finetune", t);

    let t = Instant::now();
    let alt = train(
        cfg.regime(
            TrainMode::RelocAlternate,
            cfg.reloc_epochs,
            cfg.seed_a,
            fixed,
        ),
        train_set,
        Some(&mp_ckpt),
        "alternate",
        log,
    )?;
    let alternate_val_loc = val_loc_trajectory(&alt);
    let (reloc_l, reloc_r) = restorer_of(alt)?;
    timed("alternate", t);

    let t = Instant::now();
    let joint = train(
        cfg.regime(TrainMode::RelocJoint, cfg.joint_epochs, cfg.seed_a, fixed),
        train_set,
        Some(&mp_ckpt),
        "joint",
        log,
    )?;
    let joint_val_loc = val_loc_trajectory(&joint);
    drop(joint);
    timed("joint", t);

    let t = Instant::now();
    let mp_b = train(
        cfg.regime(TrainMode::PretrainPlain, cfg.epochs, cfg.seed_b, fixed),
        train_set,
        None,
        "plain B",
        log,
    )?;
    timed("plain_b", t);

    let t = Instant::now();
    let q = cfg.fixed_qf;
    let plain_pipe = solo(&mp.localizer)?;
    let plain_on_plain = f1(&plain_pipe, Situation::PlainOnPlain, q)?;
    let plain_on_distorted = f1(&plain_pipe, Situation::PlainOnDistorted, q)?;
    let finetuned_on_distorted = f1(&solo(&dp.localizer)?, Situation::FinetunedOnDistorted, q)?;
    let reloc_on_distorted = f1(&paired(&reloc_l, &reloc_r)?, Situation::RelocOnDistorted, q)?;
    let plain_b_on_distorted = f1(&solo(&mp_b.localizer)?, Situation::PlainOnDistorted, q)?;
    let transfer_on_distorted = f1(
        &paired(&mp_b.localizer, &reloc_r)?,
        Situation::RelocOnDistorted,
        q,
    )?;

    let mut distorted = Vec::with_capacity(test.len());
    let mut restored = Vec::with_capacity(test.len());
    let (mut distorted_mae, mut restored_mae) = (0.0, 0.0);
    for s in test {
        let d = jpeg_distort(&s.plain, q)?;
        let r = reloc_r.restore(&d)?;
        distorted_mae += s.plain.mean_abs_diff(&d)? / test.len() as f64;
        restored_mae += s.plain.mean_abs_diff(&r)? / test.len() as f64;
        restored.push(r);
        distorted.push(d);
    }
    let plain_inputs: Vec<Image> = test.iter().map(|s| s.plain.clone()).collect();
    let mut separability = Vec::new();
    for (situation, model, inputs) in [
        (Situation::PlainOnPlain, &mp.localizer, &plain_inputs),
        (Situation::PlainOnDistorted, &mp.localizer, &distorted),
        (Situation::FinetunedOnDistorted, &dp.localizer, &distorted),
        (Situation::RelocOnDistorted, &reloc_l, &restored),
    ] {
        let refs: Vec<(&Image, &Mask)> = inputs.iter().zip(test.iter().map(|s| &s.mask)).collect();
        let res = analyze_separability(
            model,
            &refs,
            cfg.n_per_class,
            &mut ChaCha8Rng::seed_from_u64(cfg.seed_a),
        )?;
        separability.push(EmdRow {
            situation,
            emd: res.emd,
            emd_standardized: res.emd_standardized,
        });
    }
    timed("evaluate_fixed", t);

    let t = Instant::now();
    let dp_u = train(
        cfg.regime(
            TrainMode::FinetuneDistorted,
            cfg.epochs,
            cfg.seed_a,
            uniform,
        ),
        train_set,
        Some(&mp_ckpt),
        "finetune uniform",
        log,
    )?;
    timed("finetune_uniform", t);

    let t = Instant::now();
    let alt_u = train(
        cfg.regime(
            TrainMode::RelocAlternate,
            cfg.reloc_epochs,
            cfg.seed_a,
            uniform,
        ),
        train_set,
        Some(&mp_ckpt),
        "alternate uniform",
        log,
    )?;
    let (reloc_ul, reloc_ur) = restorer_of(alt_u)?;
    timed("alternate_uniform", t);

    let t = Instant::now();
    let (dp_pipe, reloc_pipe) = (solo(&dp_u.localizer)?, paired(&reloc_ul, &reloc_ur)?);
    let mut multi_qf = Vec::new();
    for &qf in &cfg.eval_qfs {
        multi_qf.push(QfRow {
            qf,
            plain: f1(&plain_pipe, Situation::PlainOnDistorted, qf)?,
            finetuned: f1(&dp_pipe, Situation::FinetunedOnDistorted, qf)?,
            reloc: f1(&reloc_pipe, Situation::RelocOnDistorted, qf)?,
        });
    }
    timed("evaluate_uniform", t);

    Ok(ToyResults {
        n_train: train_set.len(),
        n_test: test.len(),
        plain_on_plain,
        plain_on_distorted,
        finetuned_on_distorted,
        reloc_on_distorted,
        plain_b_on_distorted,
        transfer_on_distorted,
        distorted_mae,
        restored_mae,
        separability,
        alternate_val_loc,
        joint_val_loc,
        multi_qf,
        seconds,
    })
}
