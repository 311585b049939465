use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use super::FrameConfig;
use crate::audio_io::AudioClip;
use crate::error::{Error, Result};

/// One-sided short-time spectrum: `T` frames by `dft_size / 2 + 1` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Array2<f64>,
    pub bin_freqs: Vec<f64>,
    /// Frame centres in seconds.
    pub frame_times: Vec<f64>,
    pub power: bool,
    pub sample_rate: u32,
    pub dft_size: usize,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.values.ncols()
    }

    /// Magnitude view regardless of how the values are stored.
    pub fn magnitude(&self) -> Array2<f64> {
        if self.power {
            self.values.mapv(f64::sqrt)
        } else {
            self.values.clone()
        }
    }

    pub fn power_values(&self) -> Array2<f64> {
        if self.power {
            self.values.clone()
        } else {
            self.values.mapv(|v| v * v)
        }
    }
}

/// Frames `clip`, applies the window, zero-pads to `dft_size` and keeps the
/// non-negative-frequency half of each DFT.
pub fn compute_spectrogram(clip: &AudioClip, cfg: &FrameConfig) -> Result<Spectrogram> {
    let rate = clip.sample_rate;
    cfg.validate(rate)?;
    let frame = cfg.frame_samples(rate);
    let hop = cfg.hop_samples(rate);
    if clip.len() < frame {
        return Err(Error::TooShort {
            len: clip.len(),
            needed: frame,
        });
    }
    let n_frames = cfg.frame_count(clip.len(), rate);
    let n_bins = cfg.dft_size / 2 + 1;
    let window = cfg.window.coefficients(frame);
    let fft = FftPlanner::new().plan_fft_forward(cfg.dft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.dft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut values = Array2::zeros((n_frames, n_bins));

    for (t, mut row) in values.rows_mut().into_iter().enumerate() {
        let start = t * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < frame {
                Complex::new(clip.samples[start + i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (v, x) in row.iter_mut().zip(&buf[..n_bins]) {
            *v = if cfg.power { x.norm_sqr() } else { x.norm() };
        }
    }

    let bin_hz = rate as f64 / cfg.dft_size as f64;
    Ok(Spectrogram {
        values,
        bin_freqs: (0..n_bins).map(|k| k as f64 * bin_hz).collect(),
        frame_times: (0..n_frames)
            .map(|t| (t * hop) as f64 / rate as f64 + frame as f64 / (2.0 * rate as f64))
            .collect(),
        power: cfg.power,
        sample_rate: rate,
        dft_size: cfg.dft_size,
    })
}
