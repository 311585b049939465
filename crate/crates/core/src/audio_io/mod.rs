//! Audio input: WAV decoding, resampling, silence trimming, synthetic
//! signals and corpus manifests.

mod manifest;
mod resample;
mod silence;
mod synth;
mod wav;

pub use manifest::{CorpusManifest, Label, ManifestEntry};
pub use resample::{resample, resample_with, Resampler};
pub use silence::{trim_silence, SILENCE_FRAME_S};
pub use synth::{synth_signal, SignalKind, DEFAULT_AMPLITUDE};
pub use wav::{decode_wav, encode_wav, load_wav, write_wav};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mono PCM audio with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Range("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::EmptyAudio("clip has no samples".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::Range(format!("sample {bad} outside [-1, 1]")));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
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

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// Multiplies every sample by `gain`, clamping to the valid range.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|s| (s * gain).clamp(-1.0, 1.0))
                .collect(),
            sample_rate: self.sample_rate,
            source_id: self.source_id.clone(),
        }
    }

    /// Sample-wise sum of two clips at the same rate, truncated to the shorter one.
    pub fn mixed(&self, other: &AudioClip) -> Result<Self> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::Shape(format!(
                "cannot mix {} Hz with {} Hz",
                self.sample_rate, other.sample_rate
            )));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a + b).clamp(-1.0, 1.0))
            .collect();
        AudioClip::new(samples, self.sample_rate, self.source_id.clone())
    }

    /// Concatenates clips sharing one sample rate.
    pub fn concat(parts: &[AudioClip]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::EmptyAudio("nothing to concatenate".into()))?;
        let mut samples = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for p in parts {
            if p.sample_rate != first.sample_rate {
                return Err(Error::Shape(
                    "concatenated clips differ in sample rate".into(),
                ));
            }
            samples.extend_from_slice(&p.samples);
        }
        AudioClip::new(samples, first.sample_rate, first.source_id.clone())
    }
}

pub(crate) fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Preprocessing applied to every clip before analysis or feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub sample_rate: u32,
    /// Silent runs longer than this are shortened to it. `None` disables trimming.
    pub max_silence_s: Option<f64>,
    pub silence_threshold_dbfs: f64,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            max_silence_s: Some(2.0),
            silence_threshold_dbfs: -40.0,
        }
    }
}

impl Preprocess {
    pub fn apply(&self, clip: &AudioClip) -> Result<AudioClip> {
        let resampled = resample(clip, self.sample_rate)?;
        match self.max_silence_s {
            Some(max) => trim_silence(&resampled, max, self.silence_threshold_dbfs),
            None => Ok(resampled),
        }
    }
}
