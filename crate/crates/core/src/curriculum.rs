//! Curriculum weighting between a primary and an auxiliary loss.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Schedule of the auxiliary factor over normalized training progress `E ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum ScheduleConfig {
    Fixed {
        alpha: f64,
    },
    /// `alpha = exp(-tau E) / 2`
    Exponential {
        tau: f64,
    },
    /// `alpha = (cos(pi E) + phi) / (2 (1 + phi))`
    Cosine {
        phi: f64,
    },
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig::Cosine { phi: 3.0 }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScheduleConfig::Fixed { alpha } if !(0.0..=1.0).contains(&alpha) => Err(Error::InvalidConfig(
                format!("fixed alpha={alpha} must lie in [0, 1]"),
            )),
            ScheduleConfig::Exponential { tau } if !(tau.is_finite() && tau > 0.0) => {
                Err(Error::InvalidConfig(format!("tau={tau} must be positive")))
            }
            ScheduleConfig::Cosine { phi } if !(phi.is_finite() && phi > 0.0) => {
                Err(Error::InvalidConfig(format!("phi={phi} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Auxiliary factor at normalized progress `progress`.
pub fn alpha(config: &ScheduleConfig, progress: f64) -> Result<f64> {
    config.validate()?;
    if !(0.0..=1.0).contains(&progress) {
        return Err(Error::InvalidInput(format!(
            "normalized epoch index {progress} outside [0, 1]"
        )));
    }
    Ok(match *config {
        ScheduleConfig::Fixed { alpha } => alpha,
        ScheduleConfig::Exponential { tau } => 0.5 * (-tau * progress).exp(),
        ScheduleConfig::Cosine { phi } => ((PI * progress).cos() + phi) / (2.0 * (1.0 + phi)),
    })
}

/// `completed / total`, clamped to `[0, 1]`.
pub fn normalized_epoch(completed: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::InvalidConfig("total epochs must be positive".into()));
    }
    Ok((completed as f64 / total as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPair {
    pub primary: f64,
    pub auxiliary: f64,
}

impl LossPair {
    pub fn new(primary: f64, auxiliary: f64) -> Result<Self> {
        for (name, v) in [("primary", primary), ("auxiliary", auxiliary)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} loss {v} must be finite and non-negative"
                )));
            }
        }
        Ok(Self { primary, auxiliary })
    }
}

/// `(1 - alpha) primary + alpha auxiliary`; the endpoints return one loss exactly.
pub fn combine(losses: LossPair, alpha_value: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha_value) {
        return Err(Error::InvalidInput(format!(
            "alpha={alpha_value} must lie in [0, 1]"
        )));
    }
    if alpha_value == 0.0 {
        return Ok(losses.primary);
    }
    if alpha_value == 1.0 {
        return Ok(losses.auxiliary);
    }
    Ok((1.0 - alpha_value) * losses.primary + alpha_value * losses.auxiliary)
}

/// One row of an epoch-wise schedule table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleRow {
    pub epoch: usize,
    pub progress: f64,
    pub alpha: f64,
}

/// `alpha` at every epoch boundary `0..=total_epochs`.
pub fn schedule_table(config: &ScheduleConfig, total_epochs: usize) -> Result<Vec<ScheduleRow>> {
    (0..=total_epochs)
        .map(|epoch| {
            let progress = normalized_epoch(epoch, total_epochs)?;
            Ok(ScheduleRow {
                epoch,
                progress,
                alpha: alpha(config, progress)?,
            })
        })
        .collect()
}
