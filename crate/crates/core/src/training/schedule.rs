use serde::{Deserialize, Serialize};

pub const DECAY_FACTOR: f64 = 0.8;
/// Consecutive non-improving epochs that trigger a decay.
pub const PATIENCE: usize = 2;

/// Plateau rule: when the validation loss fails to beat the best value seen
/// so far for two epochs in a row, the learning rate is multiplied by 0.8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub best: Option<f64>,
    pub stalled: usize,
    pub history: Vec<f64>,
    pub decays: usize,
}

impl PlateauSchedule {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            best: None,
            stalled: 0,
            history: Vec::new(),
            decays: 0,
        }
    }

    /// Records one validation loss; returns `true` if the rate was decayed.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        self.history.push(val_loss);
        match self.best {
            Some(best) if val_loss >= best => self.stalled += 1,
            _ => {
                self.best = Some(val_loss);
                self.stalled = 0;
            }
        }
        if self.stalled >= PATIENCE {
            self.lr *= DECAY_FACTOR;
            self.stalled = 0;
            self.decays += 1;
            true
        } else {
            false
        }
    }
}
