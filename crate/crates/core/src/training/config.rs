use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::schedule::PlateauSchedule;
use crate::dataio::DegradationSpec;
use crate::error::{invalid, Error, Result};
use crate::losses::LossWeights;
use crate::nets::{Component, DiscriminatorConfig, LocalizationConfig, RestorationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Localizer from scratch on plain blocks.
    PretrainPlain,
    /// Localizer initialised from a plain-trained model, trained on distorted blocks.
    FinetuneDistorted,
    /// Epoch-alternating restorer/discriminator and localizer updates.
    RelocAlternate,
    /// Restorer, discriminator and localizer all updated on every minibatch.
    RelocJoint,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::PretrainPlain => "pretrain_plain",
            TrainMode::FinetuneDistorted => "finetune_distorted",
            TrainMode::RelocAlternate => "reloc_alternate",
            TrainMode::RelocJoint => "reloc_joint",
        }
    }

    pub fn needs_init(&self) -> bool {
        !matches!(self, TrainMode::PretrainPlain)
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain_plain" => Ok(TrainMode::PretrainPlain),
            "finetune_distorted" => Ok(TrainMode::FinetuneDistorted),
            "reloc_alternate" => Ok(TrainMode::RelocAlternate),
            "reloc_joint" => Ok(TrainMode::RelocJoint),
            other => Err(invalid!("unknown training mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub block_size: usize,
    /// Blocks drawn from each training image per epoch.
    pub blocks_per_image: usize,
    pub lr_restore: f64,
    pub lr_disc: f64,
    pub lr_loc: f64,
    pub weights: LossWeights,
    pub degradation: DegradationSpec,
    pub seed: u64,
    /// Global gradient-norm ceiling applied to every update.
    pub grad_clip: f64,
    /// Share of the training samples held out for validation.
    pub val_fraction: f64,
    pub restoration: RestorationConfig,
    pub localization: LocalizationConfig,
    pub disc_width: usize,
    pub disc_stages: usize,
    pub disc_highpass: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::PretrainPlain,
            epochs: 20,
            batch_size: 16,
            block_size: 128,
            blocks_per_image: 1,
            lr_restore: 1e-4,
            lr_disc: 1e-4,
            lr_loc: 1e-4,
            weights: LossWeights::default(),
            degradation: DegradationSpec::Fixed { qf: 75 },
            seed: 0,
            grad_clip: 5.0,
            val_fraction: 0.1,
            restoration: RestorationConfig::default(),
            localization: LocalizationConfig::default(),
            disc_width: 16,
            disc_stages: 3,
            disc_highpass: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid!("epochs must be at least 1"));
        }
        if self.batch_size == 0 || self.blocks_per_image == 0 {
            return Err(invalid!("batch size and blocks per image must be positive"));
        }
        if self.block_size == 0 {
            return Err(invalid!("block size must be positive"));
        }
        for (name, lr) in [
            ("restoration", self.lr_restore),
            ("discriminator", self.lr_disc),
            ("localization", self.lr_loc),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(invalid!("{name} learning rate must be positive, got {lr}"));
            }
        }
        if !(self.val_fraction >= 0.0 && self.val_fraction < 1.0) {
            return Err(invalid!("validation fraction must be in [0, 1)"));
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return Err(invalid!("gradient clip must be positive"));
        }
        self.weights.validate()?;
        self.degradation.validate()
    }

    pub fn discriminator(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            base_width: self.disc_width,
            stages: self.disc_stages,
            input_size: self.block_size,
            highpass: self.disc_highpass,
        }
    }
}

/// Mutable bookkeeping of a run: epoch counter, per-module plateau schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub restore: PlateauSchedule,
    pub loc: PlateauSchedule,
    /// Discriminator rate before decay; it follows the restorer's decay count.
    pub disc_base_lr: f64,
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            epoch: 0,
            restore: PlateauSchedule::new(config.lr_restore),
            loc: PlateauSchedule::new(config.lr_loc),
            disc_base_lr: config.lr_disc,
        }
    }

    pub fn lr(&self, component: Component) -> f64 {
        match component {
            Component::Restoration => self.restore.lr,
            Component::Localization => self.loc.lr,
            Component::Discriminator => {
                self.disc_base_lr * super::schedule::DECAY_FACTOR.powi(self.restore.decays as i32)
            }
        }
    }

    pub fn lrs(&self) -> BTreeMap<Component, f64> {
        [
            Component::Restoration,
            Component::Discriminator,
            Component::Localization,
        ]
        .into_iter()
        .map(|c| (c, self.lr(c)))
        .collect()
    }
}

/// Feeds a validation loss to the schedule of `component`. The discriminator
/// shares the restorer's schedule, so only `R` and `L` are accepted.
pub fn lr_schedule_step(
    state: &mut TrainState,
    component: Component,
    val_loss: f64,
) -> Result<bool> {
    match component {
        Component::Restoration => Ok(state.restore.observe(val_loss)),
        Component::Localization => Ok(state.loc.observe(val_loss)),
        Component::Discriminator => Err(invalid!(
            "the discriminator rate follows the restorer; step `R` instead"
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discriminator_follows_restorer_decay() {
        let cfg = TrainConfig::default();
        let mut st = TrainState::new(&cfg);
        for v in [1.0, 1.0, 1.0] {
            lr_schedule_step(&mut st, Component::Restoration, v).unwrap();
        }
        assert!((st.lr(Component::Restoration) - 0.8e-4).abs() < 1e-18);
        assert!((st.lr(Component::Discriminator) - 0.8e-4).abs() < 1e-18);
        assert_eq!(st.lr(Component::Localization), 1e-4);
        assert!(lr_schedule_step(&mut st, Component::Discriminator, 1.0).is_err());
    }

    #[test]
    fn rejects_zero_epochs_and_bad_rates() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig {
            epochs: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            lr_loc: 0.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            val_fraction: 1.0,
            ..ok
        }
        .validate()
        .is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [
            TrainMode::PretrainPlain,
            TrainMode::FinetuneDistorted,
            TrainMode::RelocAlternate,
            TrainMode::RelocJoint,
        ] {
            assert_eq!(m.as_str().parse::<TrainMode>().unwrap(), m);
        }
    }
}
