//! Training configuration and schedule presets.

use super::variant::VariantId;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSegment {
    pub learning_rate: f64,
    pub epochs: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub schedule: Vec<ScheduleSegment>,
    pub lambda1: f64,
    pub window_length: usize,
    pub seed: u64,
    pub variant: VariantId,
    /// Generator noise (z) dropout rate.
    pub noise_rate: f64,
    /// Literal saturating generator loss instead of the non-saturating form.
    pub saturating_adv: bool,
    pub optimizer: OptimizerChoice,
}

impl TrainConfig {
    /// Desk-scale schedule: Adam at 2e-4 for 40 epochs.
    pub fn desk(variant: VariantId, seed: u64) -> Self {
        TrainConfig {
            batch_size: 32,
            schedule: vec![ScheduleSegment { learning_rate: 2e-4, epochs: 40 }],
            lambda1: 1.0,
            window_length: 16,
            seed,
            variant,
            noise_rate: 0.25,
            saturating_adv: false,
            optimizer: OptimizerChoice::Adam,
        }
    }

    /// The published schedule: 0.1 for 25 epochs, then 0.01 for 75.
    pub fn paper(variant: VariantId, seed: u64) -> Self {
        TrainConfig {
            batch_size: 32,
            schedule: vec![
                ScheduleSegment { learning_rate: 0.1, epochs: 25 },
                ScheduleSegment { learning_rate: 0.01, epochs: 75 },
            ],
            lambda1: 1.0,
            window_length: 16,
            seed,
            variant,
            noise_rate: 0.5,
            saturating_adv: false,
            optimizer: OptimizerChoice::Adam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.schedule.is_empty() {
            return Err(Error::Config("schedule needs at least one segment".into()));
        }
        for s in &self.schedule {
            if s.learning_rate <= 0.0 || s.epochs == 0 {
                return Err(Error::Config(format!(
                    "schedule segments need positive rate and epochs, got {s:?}"
                )));
            }
        }
        if self.window_length == 0 {
            return Err(Error::Config("window_length must be at least 1".into()));
        }
        if self.lambda1 < 0.0 {
            return Err(Error::Config("lambda1 must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!("noise_rate {} not in [0,1)", self.noise_rate)));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> u32 {
        self.schedule.iter().map(|s| s.epochs).sum()
    }

    /// Learning rate for a 1-based epoch index; epochs beyond the schedule
    /// keep the final rate.
    pub fn learning_rate_at(&self, epoch: u32) -> f64 {
        let mut remaining = epoch;
        for s in &self.schedule {
            if remaining <= s.epochs {
                return s.learning_rate;
            }
            remaining -= s.epochs;
        }
        self.schedule.last().map(|s| s.learning_rate).unwrap_or(0.0)
    }
}
