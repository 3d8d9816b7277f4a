use crate::error::{DspError, Result};

/// A mono audio signal with its sample rate.
///
/// Samples are `f64` in nominal full scale [-1, 1]; values outside the range
/// are legal (e.g. before peak normalization) but non-finite values are not.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    /// Builds a buffer, rejecting non-finite samples and a zero sample rate.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(DspError::InvalidRate("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::InvalidSignal(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared sample value.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }

    /// Errors unless every sample is finite.
    pub fn check_finite(&self) -> Result<()> {
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::InvalidSignal(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(())
    }
}
