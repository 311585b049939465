//! RIFF/WAVE 16-bit PCM reader and writer.

use std::fs;
use std::path::Path;

use super::AudioClip;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Reads a 16-bit PCM WAV file, averaging channels down to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_wav(&bytes, id)
}

struct Format {
    channels: u16,
    sample_rate: u32,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Format> {
    if body.len() < 16 {
        return Err(Error::Format(format!(
            "fmt chunk too small ({} bytes)",
            body.len()
        )));
    }
    let mut code = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let block_align = u16_at(body, 12);
    let bits = u16_at(body, 14);
    if code == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the subformat GUID, whose
        // first two bytes carry the plain format code.
        if body.len() < 26 {
            return Err(Error::Format(
                "truncated WAVE_FORMAT_EXTENSIBLE header".into(),
            ));
        }
        code = u16_at(body, 24);
    }
    if code != FORMAT_PCM {
        return Err(Error::Unsupported(format!(
            "format code {code} (only PCM is supported)"
        )));
    }
    if bits != 16 {
        return Err(Error::Unsupported(format!(
            "{bits}-bit samples (only 16-bit is supported)"
        )));
    }
    if channels == 0 {
        return Err(Error::Format("zero channels".into()));
    }
    if sample_rate == 0 {
        return Err(Error::Format("zero sample rate".into()));
    }
    if block_align != channels * 2 {
        return Err(Error::Format(format!(
            "block align {block_align} inconsistent with {channels} channels"
        )));
    }
    Ok(Format {
        channels,
        sample_rate,
    })
}

/// Decodes an in-memory WAV image. See [`load_wav`].
pub fn decode_wav(bytes: &[u8], source_id: impl Into<String>) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12;
    let mut format = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let start = pos + 8;
        let end = start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "chunk '{}' claims {size} bytes past end of file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        match id {
            b"fmt " => format = Some(parse_fmt(&bytes[start..end])?),
            b"data" => data = Some(&bytes[start..end]),
            _ => {}
        }
        // chunks are word aligned
        pos = end + (size & 1);
    }
    let format = format.ok_or_else(|| Error::Format("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("no data chunk".into()))?;
    let channels = format.channels as usize;
    let frame_bytes = channels * 2;
    if data.len() % frame_bytes != 0 {
        return Err(Error::Format(format!(
            "data length {} is not a multiple of the frame size {frame_bytes}",
            data.len()
        )));
    }
    let samples: Vec<f64> = data
        .chunks_exact(frame_bytes)
        .map(|frame| {
            let sum: f64 = frame
                .chunks_exact(2)
                .map(|s| i16::from_le_bytes([s[0], s[1]]) as f64)
                .sum();
            sum / channels as f64 / 32768.0
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyAudio("data chunk holds no samples".into()));
    }
    AudioClip::new(samples, format.sample_rate, source_id)
}

fn quantize(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes a clip as a mono 16-bit PCM WAV image.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    out
}

pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav(clip)).map_err(|e| Error::io(path, e))
}
