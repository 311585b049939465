//! Feature extraction: framing, windowed DFT spectrograms, triangular
//! filterbanks, cepstra and delta features.

mod cache;
mod cepstrum;
mod features;
mod filterbank;
mod spectrogram;

pub use cache::{
    decode_feature_cache, encode_feature_cache, read_feature_cache, write_feature_cache,
};
pub use cepstrum::{cepstrum, delta};
pub use features::{
    extract_features, CepstralFeatures, FeatureConfig, FeatureExtractor, FeatureFingerprint,
    FeatureKind,
};
pub use filterbank::{
    apply_filterbank, build_filterbank, hz_to_mel, mel_to_hz, FilterScale, Filterbank,
    MelSpectrogram,
};
pub use spectrogram::{compute_spectrogram, Spectrogram};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Hamming,
    Blackman,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let w = |i: usize| {
            let x = 2.0 * PI * i as f64 / n as f64;
            match self {
                Window::Hann => 0.5 - 0.5 * x.cos(),
                Window::Hamming => 0.54 - 0.46 * x.cos(),
                Window::Blackman => 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos(),
                Window::Rectangular => 1.0,
            }
        };
        (0..n).map(w).collect()
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hann" => Ok(Window::Hann),
            "hamming" => Ok(Window::Hamming),
            "blackman" => Ok(Window::Blackman),
            "rectangular" | "rect" => Ok(Window::Rectangular),
            other => Err(Error::Config(format!("unknown window '{other}'"))),
        }
    }
}

/// Framing and DFT parameters shared by every spectral analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub frame_len_s: f64,
    pub hop_len_s: f64,
    pub window: Window,
    pub dft_size: usize,
    /// Store `|X|^2` instead of `|X|`.
    pub power: bool,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_len_s: 0.020,
            hop_len_s: 0.010,
            window: Window::Hann,
            dft_size: 512,
            power: false,
        }
    }
}

impl FrameConfig {
    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        (self.frame_len_s * sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_len_s * sample_rate as f64).round() as usize
    }

    /// Number of whole frames that fit in `len` samples.
    pub fn frame_count(&self, len: usize, sample_rate: u32) -> usize {
        let frame = self.frame_samples(sample_rate);
        if len < frame || frame == 0 {
            return 0;
        }
        1 + (len - frame) / self.hop_samples(sample_rate)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if !(self.hop_len_s > 0.0 && self.hop_len_s <= self.frame_len_s) {
            return Err(Error::Config(format!(
                "need 0 < hop ({}) <= frame ({})",
                self.hop_len_s, self.frame_len_s
            )));
        }
        let frame = self.frame_samples(sample_rate);
        if frame == 0 || self.hop_samples(sample_rate) == 0 {
            return Err(Error::Config("frame or hop rounds to zero samples".into()));
        }
        if !self.dft_size.is_power_of_two() || self.dft_size < frame {
            return Err(Error::Config(format!(
                "dft_size {} must be a power of two >= frame length {frame}",
                self.dft_size
            )));
        }
        Ok(())
    }
}
