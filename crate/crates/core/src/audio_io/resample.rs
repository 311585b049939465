//! Polyphase windowed-sinc sample-rate conversion.

use std::f64::consts::PI;

use super::AudioClip;
use crate::error::{Error, Result};

const DEFAULT_ZERO_CROSSINGS: usize = 32;
const DEFAULT_KAISER_BETA: f64 = 8.6;
/// Phase tables larger than this are evaluated on the fly instead.
const MAX_TABLE_PHASES: usize = 4096;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Rational-ratio resampler. Each output sample is a dot product of the input
/// with one of `up` precomputed phases of a Kaiser-windowed sinc low-pass whose
/// cutoff sits at the lower of the two Nyquist frequencies.
#[derive(Debug, Clone)]
pub struct Resampler {
    from: u32,
    to: u32,
    up: u64,
    down: u64,
    /// Taps on each side of the interpolation point, in input samples.
    reach: usize,
    cutoff: f64,
    beta: f64,
    i0_beta: f64,
    half_len: f64,
    table: Option<Vec<Vec<f64>>>,
}

impl Resampler {
    pub fn new(from: u32, to: u32) -> Result<Self> {
        Self::with_params(from, to, DEFAULT_ZERO_CROSSINGS, DEFAULT_KAISER_BETA)
    }

    /// `zero_crossings` counts sinc lobes on each side of the kernel centre at
    /// the low-pass cutoff, so each phase has `2 * zero_crossings` taps when
    /// upsampling and proportionally more when decimating.
    pub fn with_params(from: u32, to: u32, zero_crossings: usize, beta: f64) -> Result<Self> {
        if from == 0 || to == 0 {
            return Err(Error::Range("sample rates must be positive".into()));
        }
        if zero_crossings == 0 {
            return Err(Error::Range("zero_crossings must be positive".into()));
        }
        let g = gcd(from as u64, to as u64);
        let up = to as u64 / g;
        let down = from as u64 / g;
        let cutoff = (to as f64 / from as f64).min(1.0);
        let half_len = zero_crossings as f64 / cutoff;
        let mut r = Self {
            from,
            to,
            up,
            down,
            reach: half_len.ceil() as usize,
            cutoff,
            beta,
            i0_beta: bessel_i0(beta),
            half_len,
            table: None,
        };
        if (up as usize) <= MAX_TABLE_PHASES {
            r.table = Some((0..up).map(|p| r.phase_taps(p)).collect());
        }
        Ok(r)
    }

    fn kernel(&self, t: f64) -> f64 {
        let u = t / self.half_len;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let window = bessel_i0(self.beta * (1.0 - u * u).sqrt()) / self.i0_beta;
        self.cutoff * sinc(self.cutoff * t) * window
    }

    /// Taps for input offsets `-reach+1 ..= reach` relative to the base index,
    /// normalised to unit DC gain.
    fn phase_taps(&self, phase: u64) -> Vec<f64> {
        let frac = phase as f64 / self.up as f64;
        let reach = self.reach as i64;
        let mut taps: Vec<f64> = (-reach + 1..=reach)
            .map(|off| self.kernel(frac - off as f64))
            .collect();
        let sum: f64 = taps.iter().sum();
        if sum.abs() > 0.0 {
            taps.iter_mut().for_each(|t| *t /= sum);
        }
        taps
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        let n = (input_len as u64 * self.up + self.down / 2) / self.down;
        n.max(1) as usize
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        if self.from == self.to {
            return input.to_vec();
        }
        let out_len = self.output_len(input.len());
        let reach = self.reach as i64;
        let len = input.len() as i64;
        let mut owned = Vec::new();
        (0..out_len as u64)
            .map(|n| {
                let pos = n * self.down;
                let base = (pos / self.up) as i64;
                let phase = pos % self.up;
                let taps: &[f64] = match &self.table {
                    Some(t) => &t[phase as usize],
                    None => {
                        owned = self.phase_taps(phase);
                        &owned
                    }
                };
                let first = base - reach + 1;
                let lo = first.max(0);
                let hi = (base + reach).min(len - 1);
                let mut acc = 0.0;
                for j in lo..=hi {
                    acc += input[j as usize] * taps[(j - first) as usize];
                }
                acc
            })
            .collect()
    }
}

/// Converts `clip` to `target_rate`. A clip already at the target is returned as is.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::Range("target rate must be positive".into()));
    }
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }
    resample_with(&Resampler::new(clip.sample_rate, target_rate)?, clip)
}

pub fn resample_with(resampler: &Resampler, clip: &AudioClip) -> Result<AudioClip> {
    if clip.sample_rate != resampler.from {
        return Err(Error::Shape(format!(
            "resampler expects {} Hz input, clip is {} Hz",
            resampler.from, clip.sample_rate
        )));
    }
    let samples = resampler
        .process(&clip.samples)
        .into_iter()
        .map(|s| s.clamp(-1.0, 1.0))
        .collect();
    AudioClip::new(samples, resampler.to, clip.source_id.clone())
}
