//! PSE-CRNN architecture description.

use crate::error::{Result, SedError};
use serde::{Deserialize, Serialize};

/// Static shape of the network. The pooling schedule collapses the frequency
/// axis to 1 and divides time by 4, so `n_frames` input frames become
/// `n_frames / 4` output frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub n_mels: usize,
    pub n_frames: usize,
    pub pyramid_kernels: Vec<usize>,
    pub pyramid_branch_filters: usize,
    pub se_filters: Vec<usize>,
    pub se_kernel: usize,
    /// (time, frequency) average-pool factors per SE gated layer.
    pub poolings: Vec<(usize, usize)>,
    pub gru_units: usize,
    pub se_reduction: usize,
    pub classes: usize,
    pub channel_norm: bool,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            n_mels: 128,
            n_frames: 1024,
            pyramid_kernels: vec![3, 5, 7],
            pyramid_branch_filters: 16,
            se_filters: vec![16, 32, 64, 128, 128, 128, 128],
            se_kernel: 3,
            poolings: vec![(2, 2), (2, 2), (1, 2), (1, 2), (1, 2), (1, 2), (1, 2)],
            gru_units: 64,
            se_reduction: 4,
            classes: 10,
            channel_norm: true,
        }
    }
}

impl ArchitectureConfig {
    /// Desk-scale variant: 256 input frames, filters quartered, small GRU.
    pub fn reduced() -> Self {
        ArchitectureConfig {
            n_frames: 256,
            pyramid_branch_filters: 4,
            se_filters: vec![4, 8, 16, 32, 32, 32, 32],
            gru_units: 16,
            ..Self::default()
        }
    }

    /// Gradient-check variant: 64 input frames, filters halved.
    pub fn grad_check() -> Self {
        ArchitectureConfig {
            n_frames: 64,
            pyramid_branch_filters: 8,
            se_filters: vec![8, 16, 32, 64, 64, 64, 64],
            gru_units: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pyramid_kernels.is_empty() || self.pyramid_kernels.iter().any(|k| k % 2 == 0) {
            return Err(SedError::Config(
                "pyramid kernels must be odd and nonempty".into(),
            ));
        }
        if self.se_filters.len() != self.poolings.len() {
            return Err(SedError::Config(format!(
                "{} filter counts vs {} poolings",
                self.se_filters.len(),
                self.poolings.len()
            )));
        }
        if self.se_kernel % 2 == 0 {
            return Err(SedError::Config("se kernel must be odd".into()));
        }
        let freq: usize = self.poolings.iter().map(|p| p.1).product();
        if freq != self.n_mels {
            return Err(SedError::Config(format!(
                "frequency poolings collapse {} bands, input has {}",
                freq, self.n_mels
            )));
        }
        let time = self.time_pool_total();
        if self.n_frames % time != 0 {
            return Err(SedError::Config(format!(
                "n_frames {} not divisible by total time pooling {}",
                self.n_frames, time
            )));
        }
        if self.pyramid_branch_filters == 0
            || self.se_filters.iter().any(|&f| f == 0)
            || self.gru_units == 0
            || self.classes == 0
            || self.se_reduction == 0
        {
            return Err(SedError::Config("zero-sized layer".into()));
        }
        Ok(())
    }

    /// Product of the per-layer time pools (4 for the stock schedule).
    pub fn time_pool_total(&self) -> usize {
        self.poolings.iter().map(|p| p.0).product()
    }

    pub fn output_frames(&self) -> usize {
        self.n_frames / self.time_pool_total()
    }

    /// Channels entering the first SE gated layer.
    pub fn pyramid_channels(&self) -> usize {
        self.pyramid_kernels.len() * self.pyramid_branch_filters
    }

    /// Feature dimension entering the GRU stack (channels after the last
    /// conv layer, frequency axis collapsed).
    pub fn gru_input_dim(&self) -> usize {
        *self.se_filters.last().expect("validated nonempty")
    }

    /// Bottleneck width of the SE excitation at `channels`.
    pub fn se_bottleneck(&self, channels: usize) -> usize {
        (channels / self.se_reduction).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = ArchitectureConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.time_pool_total(), 4);
        assert_eq!(cfg.output_frames(), 256);
        assert_eq!(cfg.pyramid_channels(), 48);
    }

    #[test]
    fn reduced_and_grad_check_are_valid() {
        ArchitectureConfig::reduced().validate().unwrap();
        ArchitectureConfig::grad_check().validate().unwrap();
        assert_eq!(ArchitectureConfig::reduced().output_frames(), 64);
        assert_eq!(ArchitectureConfig::grad_check().output_frames(), 16);
    }

    #[test]
    fn bad_pooling_product_rejected() {
        // Frequency pools must collapse all 128 bands; 2^6 = 64 does not.
        let cfg = ArchitectureConfig {
            poolings: vec![(2, 2), (2, 2), (1, 2), (1, 2), (1, 2), (1, 2), (1, 1)],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
