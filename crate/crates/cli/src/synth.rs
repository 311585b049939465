//! Seeded desk-scale corpus: harmonic tones labelled real and spectrally
//! shaped noise labelled fake.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use vocodet::audio_io::{synth_signal, AudioClip, Label, SignalKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_real: usize,
    pub n_fake: usize,
    /// Fake clips are dealt round-robin over this many collections.
    pub fake_collections: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Upper band edge of both tone harmonics and noise.
    pub max_freq: f64,
    pub level_rms: f64,
    /// Broadband background noise added to every clip. Zero leaves only the
    /// 16-bit quantization floor, which the phone channel output shares.
    pub floor_rms: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_real: 100,
            n_fake: 100,
            fake_collections: 1,
            duration_s: 1.0,
            sample_rate: 16000,
            max_freq: 4000.0,
            level_rms: 0.1,
            floor_rms: 0.0,
        }
    }
}

pub const REAL_COLLECTION: &str = "tones";

pub fn fake_collection(spec: &SynthSpec, index: usize) -> String {
    if spec.fake_collections <= 1 {
        "shaped_noise".to_string()
    } else {
        format!("shaped_noise_{}", index % spec.fake_collections + 1)
    }
}

pub struct SynthClip {
    pub path: String,
    pub label: Label,
    pub collection: String,
    pub clip: AudioClip,
}

fn clip_rng(seed: u64, label: Label, index: usize) -> ChaCha8Rng {
    let tag = match label {
        Label::Real => 0x5245_414c,
        Label::Fake => 0x4641_4b45,
    };
    ChaCha8Rng::seed_from_u64(
        seed ^ (tag << 32) ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    )
}

fn levelled(signal: &AudioClip, floor: &AudioClip, spec: &SynthSpec) -> vocodet::Result<AudioClip> {
    signal
        .scaled(spec.level_rms / signal.rms())
        .mixed(&floor.scaled(spec.floor_rms / floor.rms()))
}

/// Clip `index` of class `label`; depends only on the spec, the seed and the index.
pub fn synth_clip(
    spec: &SynthSpec,
    seed: u64,
    label: Label,
    index: usize,
) -> vocodet::Result<SynthClip> {
    let mut rng = clip_rng(seed, label, index);
    let duration = spec.duration_s * rng.random_range(0.8..1.2);
    let floor = synth_signal(
        SignalKind::WhiteNoise { seed: rng.random() },
        duration,
        spec.sample_rate,
    )?;
    let (signal, collection, path) = match label {
        Label::Real => {
            let f0 = rng.random_range(100.0..220.0);
            let tone = synth_signal(
                SignalKind::Harmonic {
                    f0,
                    max_freq: spec.max_freq,
                },
                duration,
                spec.sample_rate,
            )?;
            (
                tone,
                REAL_COLLECTION.to_string(),
                format!("real/tone_{index:04}.wav"),
            )
        }
        Label::Fake => {
            let collection = fake_collection(spec, index);
            let shift = (index % spec.fake_collections.max(1)) as f64;
            let corner = rng.random_range(100.0..220.0) * (1.0 + shift);
            let noise = synth_signal(
                SignalKind::ShapedNoise {
                    seed: rng.random(),
                    corner,
                    max_freq: spec.max_freq,
                },
                duration,
                spec.sample_rate,
            )?;
            let path = format!("fake/{collection}/noise_{index:04}.wav");
            (noise, collection, path)
        }
    };
    let mut clip = levelled(&signal, &floor, spec)?;
    clip.source_id = path.trim_end_matches(".wav").replace('/', "__");
    Ok(SynthClip {
        path,
        label,
        collection,
        clip,
    })
}
