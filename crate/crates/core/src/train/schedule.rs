use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learning rate as a function of the epoch, resolved once per epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant {
        lr: f64,
    },
    /// `lr · gammaᵏ`, `k` = number of milestones already reached. Milestones
    /// are fractions of the total epoch count.
    MultiStep {
        lr: f64,
        milestones: Vec<f64>,
        gamma: f64,
    },
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule::Constant { lr }
    }

    pub fn multi_step(lr: f64, milestones: Vec<f64>, gamma: f64) -> Result<Self> {
        let s = LrSchedule::MultiStep { lr, milestones, gamma };
        s.validate()?;
        Ok(s)
    }

    pub fn base_lr(&self) -> f64 {
        match self {
            LrSchedule::Constant { lr } | LrSchedule::MultiStep { lr, .. } => *lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.base_lr();
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be finite and >= 0, got {lr}"
            )));
        }
        if let LrSchedule::MultiStep { milestones, gamma, .. } = self {
            if !(*gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::invalid(format!("decay factor must be > 0, got {gamma}")));
            }
            if milestones.iter().any(|&m| !(m > 0.0 && m < 1.0)) {
                return Err(Error::invalid("milestones must lie strictly between 0 and 1"));
            }
            if milestones.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("milestones must be strictly increasing"));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize, total_epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant { lr } => *lr,
            LrSchedule::MultiStep { lr, milestones, gamma } => {
                let reached = milestones
                    .iter()
                    .filter(|&&m| epoch >= (m * total_epochs as f64).floor() as usize)
                    .count();
                lr * gamma.powi(reached as i32)
            }
        }
    }
}

pub fn lr_at(schedule: &LrSchedule, epoch: usize, total_epochs: usize) -> f64 {
    schedule.lr_at(epoch, total_epochs)
}
