use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::audio_io::{resample, AudioClip};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Companding {
    None,
    MuLaw,
}

/// Narrowband telephone channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhoneChannelConfig {
    pub intermediate_rate: u32,
    pub band: (f64, f64),
    /// Butterworth order of each band edge.
    pub order: usize,
    pub companding: Companding,
    pub output_rate: u32,
}

impl Default for PhoneChannelConfig {
    fn default() -> Self {
        Self {
            intermediate_rate: 8000,
            band: (300.0, 3400.0),
            order: 4,
            companding: Companding::None,
            output_rate: 16000,
        }
    }
}

impl PhoneChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.band;
        if !(lo > 0.0 && lo < hi && hi < self.intermediate_rate as f64 / 2.0) {
            return Err(Error::Range(format!(
                "band ({lo}, {hi}) must lie inside (0, {})",
                self.intermediate_rate / 2
            )));
        }
        if self.order == 0 || !self.order.is_multiple_of(2) {
            return Err(Error::Range(format!(
                "filter order must be even and positive, got {}",
                self.order
            )));
        }
        Ok(())
    }
}

/// Second-order section in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn design(highpass: bool, cutoff: f64, q: f64, rate: f64) -> Self {
        let w0 = 2.0 * PI * cutoff / rate;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b = if highpass {
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0]
        } else {
            [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0]
        };
        Self {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    pub fn lowpass(cutoff: f64, q: f64, rate: f64) -> Self {
        Self::design(false, cutoff, q, rate)
    }

    pub fn highpass(cutoff: f64, q: f64, rate: f64) -> Self {
        Self::design(true, cutoff, q, rate)
    }

    /// Magnitude response at `freq`.
    pub fn gain(&self, freq: f64, rate: f64) -> f64 {
        let w = 2.0 * PI * freq / rate;
        let z1 = (w.cos(), -w.sin());
        let z2 = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b[0] + self.b[1] * z1.0 + self.b[2] * z2.0,
            self.b[1] * z1.1 + self.b[2] * z2.1,
        );
        let den = (
            1.0 + self.a[0] * z1.0 + self.a[1] * z2.0,
            self.a[0] * z1.1 + self.a[1] * z2.1,
        );
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }

    pub fn process(&self, x: &mut [f64]) {
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + s1;
            s1 = self.b[1] * *v - self.a[0] * y + s2;
            s2 = self.b[2] * *v - self.a[1] * y;
            *v = y;
        }
    }
}

/// Q factors of the second-order sections of an even-order Butterworth filter.
fn butterworth_q(order: usize) -> Vec<f64> {
    (0..order / 2)
        .map(|k| 1.0 / (2.0 * (PI * (2 * k + 1) as f64 / (2 * order) as f64).cos()))
        .collect()
}

fn band_sections(cfg: &PhoneChannelConfig) -> Vec<Biquad> {
    let rate = cfg.intermediate_rate as f64;
    let qs = butterworth_q(cfg.order);
    qs.iter()
        .map(|&q| Biquad::highpass(cfg.band.0, q, rate))
        .chain(qs.iter().map(|&q| Biquad::lowpass(cfg.band.1, q, rate)))
        .collect()
}

const MU: f64 = 255.0;

fn mu_law(x: f64) -> f64 {
    let y = x.signum() * (1.0 + MU * x.abs()).ln() / (1.0 + MU).ln();
    // sign plus 7-bit magnitude code
    let yq = (y * 127.0).round() / 127.0;
    yq.signum() * ((1.0 + MU).powf(yq.abs()) - 1.0) / MU
}

/// Downsample to the intermediate rate, band-limit, optionally companding,
/// and upsample to the output rate.
pub fn simulate_phone(clip: &AudioClip, cfg: &PhoneChannelConfig) -> Result<AudioClip> {
    cfg.validate()?;
    if clip.sample_rate < 16000 {
        return Err(Error::Range(format!(
            "phone simulation expects at least 16 kHz input, clip '{}' is {} Hz",
            clip.source_id, clip.sample_rate
        )));
    }
    let narrow = resample(clip, cfg.intermediate_rate)?;
    let mut x = narrow.samples.clone();
    for s in band_sections(cfg) {
        s.process(&mut x);
    }
    if cfg.companding == Companding::MuLaw {
        x.iter_mut().for_each(|v| *v = mu_law(v.clamp(-1.0, 1.0)));
    }
    x.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    let narrow = AudioClip::new(x, cfg.intermediate_rate, clip.source_id.clone())?;
    resample(&narrow, cfg.output_rate)
}
