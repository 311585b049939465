use super::{rms, AudioClip};
use crate::error::{Error, Result};

/// Length of the energy-gate frames.
pub const SILENCE_FRAME_S: f64 = 0.01;

/// Shortens every run of consecutive sub-threshold frames longer than
/// `max_silence_s` to exactly `max_silence_s` (rounded to whole frames).
///
/// A frame is silent when its RMS level in dBFS is below `threshold_dbfs`.
/// The trailing partial frame is gated like any other. Trimmed runs keep
/// their leading samples.
pub fn trim_silence(
    clip: &AudioClip,
    max_silence_s: f64,
    threshold_dbfs: f64,
) -> Result<AudioClip> {
    if !(max_silence_s >= 0.0) || !max_silence_s.is_finite() {
        return Err(Error::Range(format!(
            "max_silence_s must be >= 0, got {max_silence_s}"
        )));
    }
    let frame = ((clip.sample_rate as f64 * SILENCE_FRAME_S).round() as usize).max(1);
    let keep_frames = (max_silence_s / SILENCE_FRAME_S).round() as usize;
    let threshold = 10f64.powf(threshold_dbfs / 20.0);

    let silent: Vec<bool> = clip
        .samples
        .chunks(frame)
        .map(|c| rms(c) < threshold)
        .collect();
    if silent.iter().all(|&s| s) {
        return Err(Error::EmptyAudio(format!(
            "'{}' is entirely below {threshold_dbfs} dBFS",
            clip.source_id
        )));
    }

    let mut out = Vec::with_capacity(clip.samples.len());
    let mut i = 0;
    while i < silent.len() {
        let start = i;
        while i < silent.len() && silent[i] == silent[start] {
            i += 1;
        }
        let lo = start * frame;
        let hi = (i * frame).min(clip.samples.len());
        if silent[start] && i - start > keep_frames {
            out.extend_from_slice(&clip.samples[lo..lo + keep_frames * frame]);
        } else {
            out.extend_from_slice(&clip.samples[lo..hi]);
        }
    }
    AudioClip::new(out, clip.sample_rate, clip.source_id.clone())
}
