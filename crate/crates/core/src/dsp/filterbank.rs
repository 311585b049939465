use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Spectrogram;
use crate::error::{Error, Result};

/// `2595 * log10(1 + f / 700)`.
pub fn hz_to_mel(f: f64) -> Result<f64> {
    if !(f >= 0.0) {
        return Err(Error::Range(format!("frequency must be >= 0 Hz, got {f}")));
    }
    Ok(mel(f))
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

fn mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterScale {
    Mel,
    Linear,
}

impl FilterScale {
    fn to_scale(self, hz: f64) -> f64 {
        match self {
            FilterScale::Mel => mel(hz),
            FilterScale::Linear => hz,
        }
    }

    fn from_scale(self, v: f64) -> f64 {
        match self {
            FilterScale::Mel => mel_to_hz(v),
            FilterScale::Linear => v,
        }
    }
}

/// `S` triangular filters sampled on the one-sided DFT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Filterbank {
    /// `S x (dft_size / 2 + 1)`.
    pub weights: Array2<f64>,
    pub scale: FilterScale,
    pub band: (f64, f64),
    /// `S + 2` triangle corner frequencies in Hz, equally spaced on `scale`.
    pub edges_hz: Vec<f64>,
}

impl Filterbank {
    pub fn n_filters(&self) -> usize {
        self.weights.nrows()
    }

    pub fn center_freqs(&self) -> &[f64] {
        &self.edges_hz[1..self.edges_hz.len() - 1]
    }
}

/// Builds `count` triangles whose corners are equally spaced on `scale`
/// between `band.0` and `band.1`. Filter `s` rises from corner `s` to corner
/// `s + 1` and falls to corner `s + 2`. Each sampled row is rescaled so its
/// largest weight is exactly 1.
pub fn build_filterbank(
    scale: FilterScale,
    count: usize,
    band: (f64, f64),
    dft_size: usize,
    sample_rate: u32,
) -> Result<Filterbank> {
    let nyquist = sample_rate as f64 / 2.0;
    let (lo, hi) = band;
    if count == 0 {
        return Err(Error::Range("filter count must be >= 1".into()));
    }
    if !(0.0 <= lo && lo < hi && hi <= nyquist) {
        return Err(Error::Range(format!(
            "band ({lo}, {hi}) must satisfy 0 <= lo < hi <= {nyquist}"
        )));
    }
    if dft_size < 2 {
        return Err(Error::Range("dft_size must be >= 2".into()));
    }
    let (a, b) = (scale.to_scale(lo), scale.to_scale(hi));
    let step = (b - a) / (count + 1) as f64;
    let mut edges_hz: Vec<f64> = (0..count + 2)
        .map(|i| scale.from_scale(a + step * i as f64))
        .collect();
    // pin the ends exactly; the inverse warp may be off by an ulp
    edges_hz[0] = lo;
    edges_hz[count + 1] = hi;

    let n_bins = dft_size / 2 + 1;
    let bin_hz = sample_rate as f64 / dft_size as f64;
    let mut weights = Array2::zeros((count, n_bins));
    for s in 0..count {
        let (left, centre, right) = (edges_hz[s], edges_hz[s + 1], edges_hz[s + 2]);
        let mut row = weights.row_mut(s);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            row[k] = if f > left && f <= centre {
                (f - left) / (centre - left)
            } else if f > centre && f < right {
                (right - f) / (right - centre)
            } else {
                0.0
            };
        }
        let peak = row.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::Resolution { index: s });
        }
        row.mapv_inplace(|w| w / peak);
    }
    Ok(Filterbank {
        weights,
        scale,
        band,
        edges_hz,
    })
}

/// Filterbank-integrated spectrogram, `T x S`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Array2<f64>,
    pub scale: FilterScale,
}

/// `X_f(t, s) = sum_k |X(t, k)| H(s, k)`. Power spectrograms are converted
/// back to magnitudes first.
pub fn apply_filterbank(spec: &Spectrogram, fb: &Filterbank) -> Result<MelSpectrogram> {
    if spec.n_bins() != fb.weights.ncols() {
        return Err(Error::Shape(format!(
            "spectrogram has {} bins, filterbank expects {}",
            spec.n_bins(),
            fb.weights.ncols()
        )));
    }
    Ok(MelSpectrogram {
        values: spec.magnitude().dot(&fb.weights.t()),
        scale: fb.scale,
    })
}
