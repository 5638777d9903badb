use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modality::Modality;

/// Linear warmup then cosine annealing to zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub max_lr: f64,
    pub max_epochs: usize,
    pub warmup_epochs: usize,
    pub steps_per_epoch: usize,
}

/// `(max_lr, max_epochs, warmup_epochs)` per modality. Learning rates are
/// the printed mantissas with negative exponents.
pub fn table2(m: Modality) -> (f64, usize, usize) {
    match m {
        Modality::Text => (9e-6, 5, 1),
        Modality::Code => (1e-5, 4, 1),
        Modality::Rgb => (5e-5, 50, 5),
        Modality::Msi => (2e-5, 50, 5),
        Modality::Hsi => (1e-4, 30, 3),
        Modality::Infrared => (5e-5, 50, 5),
        Modality::Sar => (9e-6, 30, 3),
        Modality::Oblique => (5e-5, 30, 3),
        Modality::Table => (2e-5, 30, 3),
        Modality::Trajectory => (1e-5, 30, 5),
        Modality::Graph => (8e-5, 10, 2),
        Modality::PointCloud => (3e-5, 100, 10),
        Modality::Video => (1e-5, 3, 1),
    }
}

impl ScheduleSpec {
    pub fn table2(m: Modality, steps_per_epoch: usize) -> Self {
        let (max_lr, max_epochs, warmup_epochs) = table2(m);
        ScheduleSpec {
            max_lr,
            max_epochs,
            warmup_epochs,
            steps_per_epoch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return Err(Error::contract("max_lr must be positive"));
        }
        if self.steps_per_epoch == 0 || self.warmup_epochs >= self.max_epochs {
            return Err(Error::contract("need steps_per_epoch >= 1 and warmup_epochs < max_epochs"));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.max_epochs * self.steps_per_epoch
    }

    pub fn warmup_steps(&self) -> usize {
        self.warmup_epochs * self.steps_per_epoch
    }

    /// `max_lr * step / warmup` during warmup, then
    /// `max_lr * (1 + cos(pi * p)) / 2` with `p` running from 0 at the end of
    /// warmup to 1 at the final step.
    pub fn lr_at(&self, step: usize) -> Result<f64> {
        self.validate()?;
        let total = self.total_steps();
        if step >= total {
            return Err(Error::Index {
                what: "schedule step",
                index: step,
                size: total,
            });
        }
        let warm = self.warmup_steps();
        if step < warm {
            return Ok(self.max_lr * step as f64 / warm as f64);
        }
        let span = total - 1 - warm;
        if span == 0 {
            return Ok(self.max_lr);
        }
        let p = (step - warm) as f64 / span as f64;
        Ok(self.max_lr * (1.0 + (PI * p).cos()) / 2.0)
    }
}
