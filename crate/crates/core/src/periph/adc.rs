use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Bit;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum AdcError {
    #[error("threshold must lie strictly between 0 and 1, got {0}")]
    Threshold(f64),
    #[error("at least one sample per bit is needed")]
    Samples,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    /// Fraction of full scale.
    threshold: f64,
    samples_per_bit: usize,
}

impl Default for AdcConfig {
    fn default() -> Self {
        Self { threshold: 0.5, samples_per_bit: 1 }
    }
}

impl AdcConfig {
    pub fn new(threshold: f64, samples_per_bit: usize) -> Result<Self, AdcError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(AdcError::Threshold(threshold));
        }
        if samples_per_bit == 0 {
            return Err(AdcError::Samples);
        }
        Ok(Self { threshold, samples_per_bit })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn samples_per_bit(&self) -> usize {
        self.samples_per_bit
    }
}

/// Thresholds each bit time's samples (full scale = 1.0) and takes the
/// majority; ties read recessive, the idle level. A trailing partial bit
/// time is dropped.
pub fn adc_read(samples: &[f64], cfg: &AdcConfig) -> Vec<Bit> {
    samples
        .chunks_exact(cfg.samples_per_bit)
        .map(|chunk| {
            let high = chunk.iter().filter(|&&v| v >= cfg.threshold).count();
            Bit::from_level(2 * high >= chunk.len())
        })
        .collect()
}

/// Analog view of a digital bus trace: 0.0 for dominant, 1.0 for recessive.
pub fn to_analog(bits: &[Bit], samples_per_bit: usize) -> Vec<f64> {
    bits.iter().flat_map(|b| std::iter::repeat_n(b.value() as f64, samples_per_bit)).collect()
}
