use std::fmt;

use ndarray::{concatenate, s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{
    apply_filterbank, build_filterbank, cepstrum, compute_spectrogram, delta, FilterScale,
    Filterbank, FrameConfig,
};
use crate::audio_io::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mfcc,
    Lfcc,
}

impl FeatureKind {
    pub fn scale(self) -> FilterScale {
        match self {
            FeatureKind::Mfcc => FilterScale::Mel,
            FeatureKind::Lfcc => FilterScale::Linear,
        }
    }

    pub(crate) fn tag(self) -> u32 {
        match self {
            FeatureKind::Mfcc => 0,
            FeatureKind::Lfcc => 1,
        }
    }

    pub(crate) fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(FeatureKind::Mfcc),
            1 => Some(FeatureKind::Lfcc),
            _ => None,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Lfcc => "lfcc",
        })
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mfcc" => Ok(FeatureKind::Mfcc),
            "lfcc" => Ok(FeatureKind::Lfcc),
            other => Err(Error::Config(format!("unknown feature kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub frame: FrameConfig,
    /// Number of triangular filters `S`.
    pub filters: usize,
    /// Cepstral coefficients kept per frame `R`.
    pub coeffs: usize,
    pub delta_window: usize,
    pub log_floor: f64,
    /// Filterbank band in Hz; `None` spans `0..Nyquist`.
    pub band: Option<(f64, f64)>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            filters: 40,
            coeffs: 20,
            delta_window: 2,
            log_floor: 1e-10,
            band: None,
        }
    }
}

/// Everything that determines the meaning of a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureFingerprint {
    pub kind: FeatureKind,
    pub sample_rate: u32,
    pub config: FeatureConfig,
}

impl fmt::Display for FeatureFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match serde_json::to_string(self) {
            Ok(s) => f.write_str(&s),
            Err(_) => write!(f, "{:?}", self),
        }
    }
}

/// Base cepstra with their delta and double-delta blocks, each `T x R`.
#[derive(Debug, Clone, PartialEq)]
pub struct CepstralFeatures {
    pub base: Array2<f64>,
    pub delta: Array2<f64>,
    pub delta2: Array2<f64>,
    pub delta_window: usize,
    pub kind: FeatureKind,
    /// Known for freshly extracted features; cache files do not carry it.
    pub fingerprint: Option<FeatureFingerprint>,
}

impl CepstralFeatures {
    pub fn n_frames(&self) -> usize {
        self.base.nrows()
    }

    pub fn n_coeffs(&self) -> usize {
        self.base.ncols()
    }

    /// Per-frame vector length fed to the mixture models (`3R`).
    pub fn dim(&self) -> usize {
        3 * self.n_coeffs()
    }

    /// Frames as rows of `[base | delta | delta2]`.
    pub fn stacked(&self) -> Array2<f64> {
        concatenate(
            Axis(1),
            &[self.base.view(), self.delta.view(), self.delta2.view()],
        )
        .expect("blocks share a frame count")
    }

    /// Splits a `T x 3R` matrix back into blocks, keeping this instance's metadata.
    pub fn with_stacked(&self, stacked: &Array2<f64>) -> Result<Self> {
        let r = self.n_coeffs();
        if stacked.dim() != (self.n_frames(), 3 * r) {
            return Err(Error::Shape(format!(
                "expected {}x{}, got {:?}",
                self.n_frames(),
                3 * r,
                stacked.dim()
            )));
        }
        Ok(Self {
            base: stacked.slice(s![.., 0..r]).to_owned(),
            delta: stacked.slice(s![.., r..2 * r]).to_owned(),
            delta2: stacked.slice(s![.., 2 * r..]).to_owned(),
            ..self.clone()
        })
    }

    pub fn from_base(base: Array2<f64>, delta_window: usize, kind: FeatureKind) -> Result<Self> {
        let d1 = delta(base.view(), delta_window)?;
        let d2 = delta(d1.view(), delta_window)?;
        Ok(Self {
            base,
            delta: d1,
            delta2: d2,
            delta_window,
            kind,
            fingerprint: None,
        })
    }
}

/// Spectrogram, filterbank, cepstrum, delta, double delta. Holds the
/// filterbank so corpora at one sample rate build it once.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    kind: FeatureKind,
    config: FeatureConfig,
    sample_rate: u32,
    filterbank: Filterbank,
}

impl FeatureExtractor {
    pub fn new(kind: FeatureKind, config: FeatureConfig, sample_rate: u32) -> Result<Self> {
        config.frame.validate(sample_rate)?;
        let band = config.band.unwrap_or((0.0, sample_rate as f64 / 2.0));
        let filterbank = build_filterbank(
            kind.scale(),
            config.filters,
            band,
            config.frame.dft_size,
            sample_rate,
        )?;
        Self::with_filterbank(kind, config, sample_rate, filterbank)
    }

    /// Uses a caller-supplied filterbank in place of the one `kind` implies.
    pub fn with_filterbank(
        kind: FeatureKind,
        config: FeatureConfig,
        sample_rate: u32,
        filterbank: Filterbank,
    ) -> Result<Self> {
        config.frame.validate(sample_rate)?;
        if filterbank.weights.ncols() != config.frame.dft_size / 2 + 1 {
            return Err(Error::Shape("filterbank does not match dft_size".into()));
        }
        if config.coeffs == 0 || config.coeffs > filterbank.n_filters() {
            return Err(Error::Range(format!(
                "need 1 <= coeffs ({}) <= filters ({})",
                config.coeffs,
                filterbank.n_filters()
            )));
        }
        if config.delta_window == 0 {
            return Err(Error::Range("delta window must be >= 1".into()));
        }
        Ok(Self {
            kind,
            config,
            sample_rate,
            filterbank,
        })
    }

    pub fn fingerprint(&self) -> FeatureFingerprint {
        FeatureFingerprint {
            kind: self.kind,
            sample_rate: self.sample_rate,
            config: self.config,
        }
    }

    pub fn filterbank(&self) -> &Filterbank {
        &self.filterbank
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<CepstralFeatures> {
        if clip.sample_rate != self.sample_rate {
            return Err(Error::Shape(format!(
                "extractor configured for {} Hz, clip '{}' is {} Hz",
                self.sample_rate, clip.source_id, clip.sample_rate
            )));
        }
        let spec = compute_spectrogram(clip, &self.config.frame)?;
        let filtered = apply_filterbank(&spec, &self.filterbank)?;
        let base = cepstrum(&filtered, self.config.coeffs, self.config.log_floor)?;
        let mut feats = CepstralFeatures::from_base(base, self.config.delta_window, self.kind)?;
        feats.fingerprint = Some(self.fingerprint());
        Ok(feats)
    }
}

pub fn extract_features(
    clip: &AudioClip,
    kind: FeatureKind,
    config: &FeatureConfig,
) -> Result<CepstralFeatures> {
    FeatureExtractor::new(kind, *config, clip.sample_rate)?.extract(clip)
}
