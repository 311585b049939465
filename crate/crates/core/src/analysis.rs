//! Corpus statistics: pitch tracks, spectral centroid and per-bin energy
//! histograms compared against a reference corpus.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;
use crate::dsp::{compute_spectrogram, FrameConfig, Window};
use crate::error::{Error, Result};

/// Histogram values are floored at -120 dB (linear `1e-12`).
pub const DB_FLOOR: f64 = -120.0;
const LINEAR_FLOOR: f64 = 1e-12;

/// A correlation peak this close to the global maximum counts as the
/// fundamental period; later peaks at period multiples are ignored.
const PEAK_RATIO: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchConfig {
    pub band: (f64, f64),
    pub frame: FrameConfig,
    /// Odd number of frames.
    pub median_window: usize,
    pub voicing_threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            band: (50.0, 500.0),
            frame: FrameConfig {
                frame_len_s: 0.040,
                hop_len_s: 0.010,
                window: Window::Rectangular,
                dft_size: 1024,
                power: false,
            },
            median_window: 5,
            voicing_threshold: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    /// `None` marks an unvoiced frame.
    pub f0: Vec<Option<f64>>,
    pub band: (f64, f64),
    pub median_window: usize,
}

impl PitchTrack {
    pub fn voiced(&self) -> impl Iterator<Item = f64> + '_ {
        self.f0.iter().flatten().copied()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.f0.is_empty() {
            return 0.0;
        }
        self.voiced().count() as f64 / self.f0.len() as f64
    }
}

/// Normalised cross-correlation of a frame with itself at every lag in
/// `lags`, over the overlapping `len - lag` samples.
fn frame_ncc(frame: &[f64], lags: std::ops::RangeInclusive<usize>) -> Vec<f64> {
    let n = frame.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &x in frame {
        prefix.push(prefix.last().unwrap() + x * x);
    }
    lags.map(|lag| {
        let overlap = n - lag;
        let e0 = prefix[overlap];
        let e1 = prefix[n] - prefix[lag];
        let denom = (e0 * e1).sqrt();
        if denom <= 0.0 {
            return 0.0;
        }
        let num: f64 = frame[..overlap]
            .iter()
            .zip(&frame[lag..])
            .map(|(a, b)| a * b)
            .sum();
        num / denom
    })
    .collect()
}

/// Lag (fractional, via parabolic refinement) of the first correlation peak
/// within `PEAK_RATIO` of the global maximum, with that maximum.
fn pick_period(ncc: &[f64], lag_min: usize) -> Option<(f64, f64)> {
    let best = ncc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return None;
    }
    let n = ncc.len();
    let is_peak = |i: usize| {
        let left = i == 0 || ncc[i] >= ncc[i - 1];
        let right = i + 1 == n || ncc[i] >= ncc[i + 1];
        left && right
    };
    let i = (0..n).find(|&i| ncc[i] >= PEAK_RATIO * best && is_peak(i))?;
    let mut offset = 0.0;
    if i > 0 && i + 1 < n {
        let (a, b, c) = (ncc[i - 1], ncc[i], ncc[i + 1]);
        let curvature = a - 2.0 * b + c;
        if curvature < 0.0 {
            offset = (0.5 * (a - c) / curvature).clamp(-0.5, 0.5);
        }
    }
    Some(((lag_min + i) as f64 + offset, best))
}

/// Lower median, so the result is always one of the inputs.
fn lower_median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[(xs.len() - 1) / 2]
}

pub fn estimate_pitch(clip: &AudioClip, cfg: &PitchConfig) -> Result<PitchTrack> {
    let rate = clip.sample_rate as f64;
    let (f_lo, f_hi) = cfg.band;
    if !(0.0 < f_lo && f_lo < f_hi && f_hi < rate / 2.0) {
        return Err(Error::Range(format!(
            "pitch band ({f_lo}, {f_hi}) must lie inside (0, {}) Hz",
            rate / 2.0
        )));
    }
    if cfg.median_window.is_multiple_of(2) {
        return Err(Error::Range(format!(
            "median window must be odd, got {}",
            cfg.median_window
        )));
    }
    let frame = cfg.frame.frame_samples(clip.sample_rate);
    let hop = cfg.frame.hop_samples(clip.sample_rate);
    if frame == 0 || hop == 0 {
        return Err(Error::Config(
            "pitch frame or hop rounds to zero samples".into(),
        ));
    }
    let lag_min = (rate / f_hi).ceil() as usize;
    let lag_max = (rate / f_lo).floor() as usize;
    if lag_max >= frame {
        return Err(Error::Config(format!(
            "pitch frame of {frame} samples cannot observe lag {lag_max} ({f_lo} Hz)"
        )));
    }
    let n_frames = cfg.frame.frame_count(clip.len(), clip.sample_rate);
    let raw: Vec<Option<f64>> = (0..n_frames)
        .map(|t| {
            let seg = &clip.samples[t * hop..t * hop + frame];
            let ncc = frame_ncc(seg, lag_min..=lag_max);
            match pick_period(&ncc, lag_min) {
                Some((lag, peak)) if peak >= cfg.voicing_threshold => {
                    Some((rate / lag).clamp(f_lo, f_hi))
                }
                _ => None,
            }
        })
        .collect();

    let half = cfg.median_window / 2;
    let smoothed = (0..raw.len())
        .map(|i| {
            raw[i]?;
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(raw.len() - 1);
            Some(lower_median(
                raw[lo..=hi].iter().flatten().copied().collect(),
            ))
        })
        .collect();
    Ok(PitchTrack {
        f0: smoothed,
        band: cfg.band,
        median_window: cfg.median_window,
    })
}

/// Magnitude-weighted mean frequency per frame, averaged over non-silent frames.
pub fn spectral_centroid(clip: &AudioClip, frame: &FrameConfig) -> Result<f64> {
    let cfg = FrameConfig {
        power: false,
        ..*frame
    };
    let spec = compute_spectrogram(clip, &cfg)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for row in spec.values.rows() {
        let mass: f64 = row.sum();
        if mass > 0.0 {
            let weighted: f64 = row.iter().zip(&spec.bin_freqs).map(|(m, f)| m * f).sum();
            total += weighted / mass;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::UndefinedCentroid);
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Mean of all voiced frames pooled across clips; `None` when nothing is voiced.
    pub avg_pitch: Option<f64>,
    pub std_pitch: Option<f64>,
    pub avg_centroid: f64,
    pub n_clips: usize,
    pub voiced_frames: usize,
}

pub fn corpus_stats(
    clips: &[AudioClip],
    pitch: &PitchConfig,
    frame: &FrameConfig,
) -> Result<CorpusStats> {
    if clips.is_empty() {
        return Err(Error::Empty("corpus has no clips".into()));
    }
    let mut pitches = Vec::new();
    let mut centroid_sum = 0.0;
    for clip in clips {
        pitches.extend(estimate_pitch(clip, pitch)?.voiced());
        centroid_sum += spectral_centroid(clip, frame)?;
    }
    let (avg_pitch, std_pitch) = if pitches.is_empty() {
        (None, None)
    } else {
        let n = pitches.len() as f64;
        let mean = pitches.iter().sum::<f64>() / n;
        let var = pitches.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        (Some(mean), Some(var.sqrt()))
    };
    Ok(CorpusStats {
        avg_pitch,
        std_pitch,
        avg_centroid: centroid_sum / clips.len() as f64,
        n_clips: clips.len(),
        voiced_frames: pitches.len(),
    })
}

/// Mean power per DFT bin over every frame of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyHistogram {
    pub bin_freqs: Vec<f64>,
    pub mean_power: Vec<f64>,
    pub frames: usize,
}

impl EnergyHistogram {
    pub fn energy_db(&self) -> Vec<f64> {
        self.mean_power
            .iter()
            .map(|&p| (10.0 * p.log10()).max(DB_FLOOR))
            .collect()
    }

    /// Histogram of the union of both corpora.
    pub fn merge(&self, other: &EnergyHistogram) -> Result<EnergyHistogram> {
        check_grid(self, other)?;
        let total = self.frames + other.frames;
        let (wa, wb) = (
            self.frames as f64 / total as f64,
            other.frames as f64 / total as f64,
        );
        Ok(EnergyHistogram {
            bin_freqs: self.bin_freqs.clone(),
            mean_power: self
                .mean_power
                .iter()
                .zip(&other.mean_power)
                .map(|(a, b)| a * wa + b * wb)
                .collect(),
            frames: total,
        })
    }
}

fn check_grid(a: &EnergyHistogram, b: &EnergyHistogram) -> Result<()> {
    if a.bin_freqs != b.bin_freqs {
        return Err(Error::Shape(format!(
            "histogram grids differ ({} vs {} bins)",
            a.bin_freqs.len(),
            b.bin_freqs.len()
        )));
    }
    Ok(())
}

pub fn energy_histogram(clips: &[AudioClip], frame: &FrameConfig) -> Result<EnergyHistogram> {
    let first = clips
        .first()
        .ok_or_else(|| Error::Empty("corpus has no clips".into()))?;
    let cfg = FrameConfig {
        power: true,
        ..*frame
    };
    let mut sums = vec![0.0; cfg.dft_size / 2 + 1];
    let mut frames = 0usize;
    let mut bin_freqs = Vec::new();
    for clip in clips {
        if clip.sample_rate != first.sample_rate {
            return Err(Error::Shape(
                "clips in one histogram must share a sample rate".into(),
            ));
        }
        let spec = compute_spectrogram(clip, &cfg)?;
        for row in spec.values.rows() {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        frames += spec.n_frames();
        bin_freqs = spec.bin_freqs;
    }
    Ok(EnergyHistogram {
        bin_freqs,
        mean_power: sums.into_iter().map(|s| s / frames as f64).collect(),
        frames,
    })
}

/// `(test - reference) / reference` per bin on floored linear energies.
pub fn histogram_difference(
    test: &EnergyHistogram,
    reference: &EnergyHistogram,
) -> Result<Vec<f64>> {
    check_grid(test, reference)?;
    Ok(test
        .mean_power
        .iter()
        .zip(&reference.mean_power)
        .map(|(&t, &r)| {
            let (t, r) = (t.max(LINEAR_FLOOR), r.max(LINEAR_FLOOR));
            (t - r) / r
        })
        .collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Columns: `collection,avg_pitch,std_pitch,avg_centroid`.
pub fn write_stats_csv<W: Write>(
    rows: &[(String, CorpusStats)],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "collection,avg_pitch,std_pitch,avg_centroid")?;
    for (name, s) in rows {
        writeln!(
            out,
            "{name},{},{},{}",
            opt(s.avg_pitch),
            opt(s.std_pitch),
            s.avg_centroid
        )?;
    }
    Ok(())
}

/// Columns: `freq_hz,energy_db`, plus `rel_diff` when a difference is given.
pub fn write_histogram_csv<W: Write>(
    hist: &EnergyHistogram,
    rel_diff: Option<&[f64]>,
    mut out: W,
) -> std::io::Result<()> {
    let db = hist.energy_db();
    match rel_diff {
        Some(diff) => {
            writeln!(out, "freq_hz,energy_db,rel_diff")?;
            for ((f, e), d) in hist.bin_freqs.iter().zip(&db).zip(diff) {
                writeln!(out, "{f},{e},{d}")?;
            }
        }
        None => {
            writeln!(out, "freq_hz,energy_db")?;
            for (f, e) in hist.bin_freqs.iter().zip(&db) {
                writeln!(out, "{f},{e}")?;
            }
        }
    }
    Ok(())
}
