use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{Error, Result};

/// Peak amplitude of every generated signal.
pub const DEFAULT_AMPLITUDE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalKind {
    Sine {
        freq: f64,
    },
    /// Uniform noise in `[-A, A]`, reproducible from `seed`.
    WhiteNoise {
        seed: u64,
    },
    /// Linear frequency sweep from `f0` to `f1` over the clip.
    Chirp {
        f0: f64,
        f1: f64,
    },
    Silence,
    /// Harmonics of `f0` with `1/k` amplitudes below `max_freq`, with a
    /// 5 Hz vibrato of 2% depth.
    Harmonic {
        f0: f64,
        max_freq: f64,
    },
    /// White noise shaped by a first-order roll-off above `corner` and cut
    /// off at `max_freq`.
    ShapedNoise {
        seed: u64,
        corner: f64,
        max_freq: f64,
    },
}

const VIBRATO_HZ: f64 = 5.0;
const VIBRATO_DEPTH: f64 = 0.02;

fn peak_normalised(mut s: Vec<f64>, a: f64) -> Vec<f64> {
    let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        s.iter_mut().for_each(|v| *v *= a / peak);
    }
    s
}

fn harmonic(f0: f64, max_freq: f64, n: usize, rate: f64) -> Vec<f64> {
    let top = (max_freq / (f0 * (1.0 + VIBRATO_DEPTH))).floor().max(1.0) as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let phase = f0 * t
                - f0 * VIBRATO_DEPTH / (2.0 * PI * VIBRATO_HZ)
                    * ((2.0 * PI * VIBRATO_HZ * t).cos() - 1.0);
            (1..=top)
                .map(|k| (2.0 * PI * k as f64 * phase).sin() / k as f64)
                .sum()
        })
        .collect()
}

fn shaped_noise(seed: u64, corner: f64, max_freq: f64, n: usize, rate: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(rng.random_range(-1.0..=1.0), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * rate / n as f64;
        let gain = if f < max_freq {
            1.0 / (1.0 + (f / corner).powi(2)).sqrt()
        } else {
            0.0
        };
        *v *= gain;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn check_freq(f: f64, nyquist: f64) -> Result<()> {
    if !(0.0..nyquist).contains(&f) {
        return Err(Error::Range(format!(
            "frequency {f} Hz outside [0, {nyquist}) Hz"
        )));
    }
    Ok(())
}

pub fn synth_signal(kind: SignalKind, duration_s: f64, sample_rate: u32) -> Result<AudioClip> {
    if sample_rate == 0 {
        return Err(Error::Range("sample rate must be positive".into()));
    }
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::Range(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    let rate = sample_rate as f64;
    let n = ((duration_s * rate).round() as usize).max(1);
    let nyquist = rate / 2.0;
    let a = DEFAULT_AMPLITUDE;
    let (samples, id): (Vec<f64>, String) = match kind {
        SignalKind::Sine { freq } => {
            check_freq(freq, nyquist)?;
            let s = (0..n)
                .map(|i| a * (2.0 * PI * freq * i as f64 / rate).sin())
                .collect();
            (s, format!("sine_{freq}"))
        }
        SignalKind::WhiteNoise { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = (0..n).map(|_| rng.random_range(-a..=a)).collect();
            (s, format!("noise_{seed}"))
        }
        SignalKind::Chirp { f0, f1 } => {
            check_freq(f0, nyquist)?;
            check_freq(f1, nyquist)?;
            let sweep = (f1 - f0) / duration_s;
            let s = (0..n)
                .map(|i| {
                    let t = i as f64 / rate;
                    a * (2.0 * PI * (f0 * t + 0.5 * sweep * t * t)).sin()
                })
                .collect();
            (s, format!("chirp_{f0}_{f1}"))
        }
        SignalKind::Silence => (vec![0.0; n], "silence".to_string()),
        SignalKind::Harmonic { f0, max_freq } => {
            check_freq(f0 * (1.0 + VIBRATO_DEPTH), nyquist)?;
            check_freq(max_freq, nyquist + f64::EPSILON)?;
            (
                peak_normalised(harmonic(f0, max_freq, n, rate), a),
                format!("harmonic_{f0}"),
            )
        }
        SignalKind::ShapedNoise {
            seed,
            corner,
            max_freq,
        } => {
            if !(corner > 0.0) {
                return Err(Error::Range(format!(
                    "corner frequency must be positive, got {corner}"
                )));
            }
            check_freq(max_freq, nyquist + f64::EPSILON)?;
            let s = shaped_noise(seed, corner, max_freq, n, rate);
            (peak_normalised(s, a), format!("shaped_noise_{seed}"))
        }
    };
    AudioClip::new(samples, sample_rate, id)
}
