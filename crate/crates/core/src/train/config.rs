//! Training hyperparameters.

use crate::error::{Result, SedError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Principle {
    /// Composition consistency training.
    Cct,
    /// Multi-hot MixMatch with two augmentations.
    M3,
    /// Plain mean teacher without MixUp.
    MeanTeacher,
}

impl std::str::FromStr for Principle {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cct" => Ok(Principle::Cct),
            "m3" => Ok(Principle::M3),
            "mean-teacher" => Ok(Principle::MeanTeacher),
            other => Err(format!(
                "unknown principle {other:?} (expected cct, m3 or mean-teacher)"
            )),
        }
    }
}

impl std::fmt::Display for Principle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Principle::Cct => "cct",
            Principle::M3 => "m3",
            Principle::MeanTeacher => "mean-teacher",
        })
    }
}

/// How the supervised CCT/M3 terms pick their targets: mixed ground-truth
/// labels, or the literal mixed model outputs treated as detached
/// pseudo-labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupervisedTarget {
    MixedLabels,
    ModelMix,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainingConfig {
    pub principle: Principle,
    /// Beta(alpha, alpha) parameter for the per-batch lambda draw.
    pub alpha: f64,
    /// Cap of the consistency weight ramp.
    pub w_max: f64,
    pub ramp_steps: u64,
    pub ema_decay: f64,
    pub learning_rate: f64,
    pub total_steps: u64,
    /// Decode threshold used by in-run evaluation.
    pub threshold: f64,
    pub seed: u64,
    /// Relative white-noise level for augmentation (0 disables noise).
    pub noise_sigma: f32,
    pub grad_clip: f64,
    pub supervised_target: SupervisedTarget,
    /// 0 means checkpoint only at the end.
    pub checkpoint_every: u64,
    pub batch_weak: usize,
    pub batch_strong: usize,
    pub batch_unlabeled: usize,
    /// Disable to train on clean features (overfit experiments).
    pub augment: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            principle: Principle::Cct,
            alpha: 1.0,
            w_max: 1.0,
            ramp_steps: 400,
            ema_decay: 0.999,
            learning_rate: 1e-3,
            total_steps: 1000,
            threshold: 0.5,
            seed: 1,
            noise_sigma: 0.05,
            grad_clip: 5.0,
            supervised_target: SupervisedTarget::MixedLabels,
            checkpoint_every: 0,
            batch_weak: 6,
            batch_strong: 6,
            batch_unlabeled: 12,
            augment: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 {
            return Err(SedError::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(SedError::Config(format!(
                "ema decay must be in [0,1], got {}",
                self.ema_decay
            )));
        }
        if self.w_max < 0.0 {
            return Err(SedError::Config(format!("w_max must be >= 0, got {}", self.w_max)));
        }
        if self.learning_rate <= 0.0 {
            return Err(SedError::Config("learning rate must be positive".into()));
        }
        if self.threshold <= 0.0 || self.threshold >= 1.0 {
            return Err(SedError::Config(format!(
                "threshold must be in (0,1), got {}",
                self.threshold
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(SedError::Config("noise sigma must be nonnegative".into()));
        }
        Ok(())
    }
}
