use crate::error::{Error, Result};

use super::{PEAK, SAMPLE_RATE};

/// Mono audio at 16 kHz.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>) -> Result<Self> {
        Self::with_rate(samples, SAMPLE_RATE)
    }

    pub fn with_rate(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::invalid(format!(
                "sample rate {sample_rate} Hz is not supported (expected {SAMPLE_RATE})"
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("audio sample {i} is {}", samples[i])));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
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

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Rescales so the largest magnitude equals `0.99`. Silence is unchanged.
    pub fn peak_normalized(&self) -> AudioClip {
        let peak = self.peak();
        if peak == 0.0 {
            return self.clone();
        }
        let gain = PEAK / peak;
        AudioClip {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Sub-range `[start, end)` of the samples.
    pub fn slice(&self, start: usize, end: usize) -> AudioClip {
        AudioClip {
            samples: self.samples[start.min(self.len())..end.min(self.len())].to_vec(),
            sample_rate: self.sample_rate,
        }
    }
}
