use std::collections::BTreeMap;

use candle_core::{DType, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::config::{lr_schedule_step, TrainConfig, TrainMode, TrainState};
use crate::dataio::{extract_blocks, jpeg_distort, sample_qf, Sample};
use crate::error::{invalid, Error, Result};
use crate::losses::{loss_disc, loss_gen, loss_loc, loss_mae};
use crate::nets::{
    images_to_tensor, masks_to_tensor, Checkpoint, Component, Discriminator, LocalizationNet,
    Network, Provenance, RestorationNet,
};

/// One record per epoch of `train_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mode: TrainMode,
    pub updated_modules: Vec<Component>,
    /// Mean minibatch losses: any of `disc`, `gen`, `mae`, `restore_loc`,
    /// `restore` and `loc`.
    pub losses: BTreeMap<String, f64>,
    /// Validation losses: `restore` (without the adversarial term) and/or `loc`.
    pub val_losses: BTreeMap<String, f64>,
    /// Learning rates in effect during this epoch.
    pub lrs: BTreeMap<Component, f64>,
    /// Parameter digests after the epoch.
    pub digests: BTreeMap<Component, String>,
}

/// Which modules an epoch updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Discriminator then restorer; the localizer only supplies its loss.
    Restorer,
    /// Localizer only.
    Localizer,
    /// All three on every minibatch.
    Joint,
}

impl Phase {
    pub fn of(mode: TrainMode, epoch: usize) -> Phase {
        match mode {
            TrainMode::PretrainPlain | TrainMode::FinetuneDistorted => Phase::Localizer,
            TrainMode::RelocAlternate if epoch % 2 == 1 => Phase::Restorer,
            TrainMode::RelocAlternate => Phase::Localizer,
            TrainMode::RelocJoint => Phase::Joint,
        }
    }

    fn updated(&self) -> Vec<Component> {
        match self {
            Phase::Restorer => vec![Component::Restoration, Component::Discriminator],
            Phase::Localizer => vec![Component::Localization],
            Phase::Joint => vec![
                Component::Restoration,
                Component::Discriminator,
                Component::Localization,
            ],
        }
    }
}

/// Training and validation samples after degradation.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
}

impl TrainData {
    /// Attaches distorted copies where the mode needs them and holds out a
    /// validation share. When the share rounds to zero samples, validation
    /// reuses the training set.
    pub fn prepare(samples: &[Sample], config: &TrainConfig) -> Result<TrainData> {
        if samples.is_empty() {
            return Err(invalid!("training needs at least one sample"));
        }
        for s in samples {
            let (h, w) = s.dims();
            if config.block_size > h.min(w) {
                return Err(invalid!(
                    "block size {} exceeds sample `{}` of size {h}x{w}",
                    config.block_size,
                    s.id
                ));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let mut samples = samples.to_vec();
        if config.mode != TrainMode::PretrainPlain {
            for s in &mut samples {
                if s.distorted.is_none() {
                    let qf = sample_qf(&config.degradation, &mut rng)?;
                    s.set_distorted(jpeg_distort(&s.plain, qf)?)?;
                }
            }
        }
        let n = samples.len();
        let n_val = (n as f64 * config.val_fraction).round() as usize;
        if n_val == 0 || n_val >= n {
            return Ok(TrainData {
                val: samples.clone(),
                train: samples,
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let val = order[..n_val].iter().map(|&i| samples[i].clone()).collect();
        let mut rest = order[n_val..].to_vec();
        rest.sort_unstable();
        let train = rest.iter().map(|&i| samples[i].clone()).collect();
        Ok(TrainData { train, val })
    }
}

struct Batch {
    plain: Tensor,
    distorted: Option<Tensor>,
    mask: Tensor,
    len: usize,
}

impl Batch {
    fn from_blocks(blocks: &[Sample], dtype: DType) -> Result<Batch> {
        let plain: Vec<_> = blocks.iter().map(|b| &b.plain).collect();
        let masks: Vec<_> = blocks.iter().map(|b| &b.mask).collect();
        let distorted = if blocks.iter().all(|b| b.distorted.is_some()) {
            let d: Vec<_> = blocks
                .iter()
                .map(|b| b.distorted.as_ref().unwrap())
                .collect();
            Some(images_to_tensor(&d, dtype)?)
        } else {
            None
        };
        Ok(Batch {
            plain: images_to_tensor(&plain, dtype)?,
            distorted,
            mask: masks_to_tensor(&masks, dtype)?,
            len: blocks.len(),
        })
    }

    fn distorted(&self) -> Result<&Tensor> {
        self.distorted
            .as_ref()
            .ok_or_else(|| invalid!("batch has no distorted images"))
    }
}

#[derive(Default)]
struct Meter {
    sums: BTreeMap<String, f64>,
}

impl Meter {
    fn add(&mut self, name: &str, value: &Tensor, weight: usize) -> Result<f64> {
        let v = scalar(value)?;
        if !v.is_finite() {
            return Err(Error::Degenerate(format!("{name} loss became {v}")));
        }
        *self.sums.entry(name.to_string()).or_default() += v * weight as f64;
        Ok(v)
    }

    fn finish(self, total: usize) -> BTreeMap<String, f64> {
        self.sums
            .into_iter()
            .map(|(k, v)| (k, v / total as f64))
            .collect()
    }
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Result of a training run. The localizer (and restorer, if any) hold the
/// weights of the best validation epoch.
pub struct TrainOutcome {
    pub localizer: LocalizationNet,
    pub restorer: Option<RestorationNet>,
    pub discriminator: Option<Discriminator>,
    pub logs: Vec<EpochLog>,
    /// Epoch whose weights were kept; `None` if no epoch validated the localizer.
    pub best_epoch: Option<usize>,
    pub state: TrainState,
}

impl TrainOutcome {
    pub fn localizer_checkpoint(&self, seed: u64) -> Result<Checkpoint> {
        let phase = self
            .logs
            .first()
            .map(|l| l.mode.as_str())
            .unwrap_or("unknown");
        let epoch = self.best_epoch.unwrap_or(self.logs.len());
        self.localizer
            .to_checkpoint(Provenance::new(phase, epoch, seed))
    }

    pub fn restorer_checkpoint(&self, seed: u64) -> Result<Option<Checkpoint>> {
        let phase = self
            .logs
            .first()
            .map(|l| l.mode.as_str())
            .unwrap_or("unknown");
        let epoch = self.best_epoch.unwrap_or(self.logs.len());
        self.restorer
            .as_ref()
            .map(|r| r.to_checkpoint(Provenance::new(phase, epoch, seed)))
            .transpose()
    }
}

struct Snapshot {
    epoch: usize,
    loss: f64,
    localizer: LocalizationNet,
    restorer: Option<RestorationNet>,
}

/// Epoch-by-epoch driver shared by every training regime.
pub struct Trainer {
    config: TrainConfig,
    state: TrainState,
    data: TrainData,
    val_blocks: Vec<Sample>,
    block_seed: u64,
    localizer: LocalizationNet,
    restorer: Option<RestorationNet>,
    discriminator: Option<Discriminator>,
    opt_l: Adam,
    opt_r: Option<Adam>,
    opt_d: Option<Adam>,
    best: Option<Snapshot>,
    logs: Vec<EpochLog>,
}

impl Trainer {
    /// `init` must be a localizer checkpoint for every mode except plain
    /// pretraining, which starts from random weights.
    pub fn new(config: TrainConfig, samples: &[Sample], init: Option<&Checkpoint>) -> Result<Self> {
        config.validate()?;
        let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);
        let (seed_l, seed_r, seed_d, val_seed, block_seed): (u64, u64, u64, u64, u64) = (
            seeds.random(),
            seeds.random(),
            seeds.random(),
            seeds.random(),
            seeds.random(),
        );

        let localizer = match (config.mode.needs_init(), init) {
            (true, Some(ckpt)) => LocalizationNet::from_checkpoint(ckpt)?,
            (true, None) => {
                return Err(invalid!(
                    "{} starts from a plain-trained localizer checkpoint",
                    config.mode
                ))
            }
            (false, Some(_)) => {
                return Err(invalid!("plain pretraining starts from random weights"))
            }
            (false, None) => LocalizationNet::new(config.localization, seed_l)?,
        };
        let data = TrainData::prepare(samples, &config)?;

        let reloc = matches!(
            config.mode,
            TrainMode::RelocAlternate | TrainMode::RelocJoint
        );
        let (restorer, discriminator) = if reloc {
            (
                Some(RestorationNet::new(config.restoration, seed_r)?),
                Some(Discriminator::new(config.discriminator(), seed_d)?),
            )
        } else {
            (None, None)
        };
        let clip = Some(config.grad_clip);
        let opt_l = Adam::new(localizer.params().all_vars(), clip);
        let opt_r = restorer
            .as_ref()
            .map(|r| Adam::new(r.params().all_vars(), clip));
        let opt_d = discriminator
            .as_ref()
            .map(|d| Adam::new(d.params().all_vars(), clip));

        let mut val_rng = ChaCha8Rng::seed_from_u64(val_seed);
        let mut val_blocks = Vec::new();
        for s in &data.val {
            val_blocks.extend(extract_blocks(
                s,
                config.block_size,
                config.blocks_per_image,
                &mut val_rng,
            )?);
        }

        Ok(Self {
            state: TrainState::new(&config),
            config,
            data,
            val_blocks,
            block_seed,
            localizer,
            restorer,
            discriminator,
            opt_l,
            opt_r,
            opt_d,
            best: None,
            logs: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn data(&self) -> &TrainData {
        &self.data
    }

    pub fn localizer(&self) -> &LocalizationNet {
        &self.localizer
    }

    pub fn restorer(&self) -> Option<&RestorationNet> {
        self.restorer.as_ref()
    }

    pub fn discriminator(&self) -> Option<&Discriminator> {
        self.discriminator.as_ref()
    }

    pub fn logs(&self) -> &[EpochLog] {
        &self.logs
    }

    pub fn is_finished(&self) -> bool {
        self.state.epoch >= self.config.epochs
    }

    fn epoch_blocks(&self, epoch: usize) -> Result<Vec<Sample>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.block_seed);
        rng.set_stream(epoch as u64);
        let mut blocks = Vec::new();
        for s in &self.data.train {
            blocks.extend(extract_blocks(
                s,
                self.config.block_size,
                self.config.blocks_per_image,
                &mut rng,
            )?);
        }
        blocks.shuffle(&mut rng);
        Ok(blocks)
    }

    fn restorer_ref(&self) -> Result<&RestorationNet> {
        self.restorer
            .as_ref()
            .ok_or_else(|| invalid!("this regime has no restorer"))
    }

    /// The tensor the localizer sees for this mode.
    fn loc_input(&self, batch: &Batch) -> Result<Tensor> {
        match self.config.mode {
            TrainMode::PretrainPlain => Ok(batch.plain.clone()),
            TrainMode::FinetuneDistorted => Ok(batch.distorted()?.clone()),
            TrainMode::RelocAlternate | TrainMode::RelocJoint => {
                Ok(self.restorer_ref()?.forward(batch.distorted()?)?.detach())
            }
        }
    }

    fn step_localizer(&mut self, batch: &Batch, meter: &mut Meter) -> Result<()> {
        let input = self.loc_input(batch)?;
        let loss = loss_loc(
            &self.localizer.forward(&input)?,
            &batch.mask,
            &self.config.weights,
        )?;
        meter.add("loc", &loss, batch.len)?;
        let grads = loss.backward()?;
        let lr = self.state.lr(Component::Localization);
        self.opt_l.step(&grads, lr)
    }

    /// Discriminator update followed by a restorer update. Returns the
    /// restored batch, detached.
    fn step_restorer(&mut self, batch: &Batch, meter: &mut Meter) -> Result<Tensor> {
        let w = self.config.weights;
        let distorted = batch.distorted()?.clone();
        let restorer = self
            .restorer
            .as_ref()
            .ok_or_else(|| invalid!("no restorer"))?;
        let disc = self
            .discriminator
            .as_ref()
            .ok_or_else(|| invalid!("no discriminator"))?;
        let restored = restorer.forward(&distorted)?;

        let d_loss = loss_disc(
            &disc.forward(&batch.plain)?,
            &disc.forward(&restored.detach())?,
            w.eps_log,
        )?;
        meter.add("disc", &d_loss, batch.len)?;
        let grads = d_loss.backward()?;
        let lr_d = self.state.lr(Component::Discriminator);
        self.opt_d.as_mut().unwrap().step(&grads, lr_d)?;

        let mae = loss_mae(&batch.plain, &restored)?;
        meter.add("mae", &mae, batch.len)?;
        let mut total = (&mae * w.mae)?;
        if w.adversarial > 0.0 {
            let gen = loss_gen(&disc.forward(&restored)?, w.eps_log)?;
            meter.add("gen", &gen, batch.len)?;
            total = (total + (gen * w.adversarial)?)?;
        }
        if w.forensic > 0.0 {
            let loc = loss_loc(&self.localizer.forward(&restored)?, &batch.mask, &w)?;
            meter.add("restore_loc", &loc, batch.len)?;
            total = (total + (loc * w.forensic)?)?;
        }
        meter.add("restore", &total, batch.len)?;
        let grads = total.backward()?;
        let lr_r = self.state.lr(Component::Restoration);
        self.opt_r.as_mut().unwrap().step(&grads, lr_r)?;
        Ok(restored.detach())
    }

    fn validate(&self, phase: Phase) -> Result<BTreeMap<String, f64>> {
        let w = self.config.weights;
        let mut meter = Meter::default();
        let total = self.val_blocks.len();
        let dtype = self.localizer.params().dtype();
        let want_restore = matches!(phase, Phase::Restorer | Phase::Joint);
        let want_loc = matches!(phase, Phase::Localizer | Phase::Joint);
        for chunk in self.val_blocks.chunks(self.config.batch_size) {
            let batch = Batch::from_blocks(chunk, dtype)?;
            let input = self.loc_input(&batch)?;
            let loc = loss_loc(&self.localizer.forward(&input)?, &batch.mask, &w)?;
            if want_loc {
                meter.add("loc", &loc, batch.len)?;
            }
            if want_restore {
                let mae = loss_mae(&batch.plain, &input)?;
                let restore = ((mae * w.mae)? + (loc * w.forensic)?)?;
                meter.add("restore", &restore, batch.len)?;
            }
        }
        Ok(meter.finish(total))
    }

    fn digests(&self) -> Result<BTreeMap<Component, String>> {
        let mut out = BTreeMap::new();
        out.insert(Component::Localization, self.localizer.digest()?);
        if let Some(r) = &self.restorer {
            out.insert(Component::Restoration, r.digest()?);
        }
        if let Some(d) = &self.discriminator {
            out.insert(Component::Discriminator, d.digest()?);
        }
        Ok(out)
    }

    /// Runs the next epoch. Epochs are numbered from 1; in alternate mode odd
    /// epochs train the restorer and discriminator, even ones the localizer.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        if self.is_finished() {
            return Err(invalid!("all {} epochs already ran", self.config.epochs));
        }
        let epoch = self.state.epoch + 1;
        let phase = Phase::of(self.config.mode, epoch);
        let lrs = self.state.lrs();
        let blocks = self.epoch_blocks(epoch)?;
        let dtype = self.localizer.params().dtype();
        let mut meter = Meter::default();

        for chunk in blocks.chunks(self.config.batch_size) {
            let batch = Batch::from_blocks(chunk, dtype)?;
            match phase {
                Phase::Localizer => self.step_localizer(&batch, &mut meter)?,
                Phase::Restorer => {
                    self.step_restorer(&batch, &mut meter)?;
                }
                Phase::Joint => {
                    let restored = self.step_restorer(&batch, &mut meter)?;
                    let loss = loss_loc(
                        &self.localizer.forward(&restored)?,
                        &batch.mask,
                        &self.config.weights,
                    )?;
                    meter.add("loc", &loss, batch.len)?;
                    let grads = loss.backward()?;
                    let lr = self.state.lr(Component::Localization);
                    self.opt_l.step(&grads, lr)?;
                }
            }
        }
        let losses = meter.finish(blocks.len());

        let val_losses = self.validate(phase)?;
        if let Some(&v) = val_losses.get("restore") {
            lr_schedule_step(&mut self.state, Component::Restoration, v)?;
        }
        if let Some(&v) = val_losses.get("loc") {
            lr_schedule_step(&mut self.state, Component::Localization, v)?;
            if self.best.as_ref().is_none_or(|b| v < b.loss) {
                self.best = Some(Snapshot {
                    epoch,
                    loss: v,
                    localizer: self.localizer.duplicate()?,
                    restorer: self.restorer.as_ref().map(|r| r.duplicate()).transpose()?,
                });
            }
        }
        self.state.epoch = epoch;

        let log = EpochLog {
            epoch,
            mode: self.config.mode,
            updated_modules: phase.updated(),
            losses,
            val_losses,
            lrs,
            digests: self.digests()?,
        };
        self.logs.push(log.clone());
        Ok(log)
    }

    /// Runs the remaining epochs, handing each log to `on_epoch`.
    pub fn run(
        mut self,
        mut on_epoch: impl FnMut(&EpochLog) -> Result<()>,
    ) -> Result<TrainOutcome> {
        while !self.is_finished() {
            let log = self.run_epoch()?;
            on_epoch(&log)?;
        }
        Ok(self.finish())
    }

    /// Consumes the trainer, keeping the best-validation weights.
    pub fn finish(self) -> TrainOutcome {
        let (localizer, restorer, best_epoch) = match self.best {
            Some(s) => (s.localizer, s.restorer.or(self.restorer), Some(s.epoch)),
            None => (self.localizer, self.restorer, None),
        };
        TrainOutcome {
            localizer,
            restorer,
            discriminator: self.discriminator,
            logs: self.logs,
            best_epoch,
            state: self.state,
        }
    }
}

fn with_mode(config: &TrainConfig, mode: TrainMode) -> TrainConfig {
    TrainConfig {
        mode,
        ..config.clone()
    }
}

fn expect_localizer(ckpt: &Checkpoint) -> Result<&Checkpoint> {
    ckpt.expect(Component::Localization)
}

/// Localizer trained from scratch on plain blocks.
pub fn pretrain_plain(samples: &[Sample], config: &TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(with_mode(config, TrainMode::PretrainPlain), samples, None)?.run(|_| Ok(()))
}

/// Plain-trained localizer fine-tuned on distorted blocks.
pub fn finetune_distorted(
    m_p: &Checkpoint,
    samples: &[Sample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let cfg = with_mode(config, TrainMode::FinetuneDistorted);
    Trainer::new(cfg, samples, Some(expect_localizer(m_p)?))?.run(|_| Ok(()))
}

/// Alternating restorer/localizer optimisation.
pub fn train_reloc(
    m_p: &Checkpoint,
    samples: &[Sample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let cfg = with_mode(config, TrainMode::RelocAlternate);
    Trainer::new(cfg, samples, Some(expect_localizer(m_p)?))?.run(|_| Ok(()))
}

/// Joint optimisation of all three modules on every minibatch.
pub fn train_joint(
    m_p: &Checkpoint,
    samples: &[Sample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let cfg = with_mode(config, TrainMode::RelocJoint);
    Trainer::new(cfg, samples, Some(expect_localizer(m_p)?))?.run(|_| Ok(()))
}
