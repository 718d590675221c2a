//! Minimal RIFF/WAVE codec for mono 16-bit PCM.

use std::fs;
use std::path::Path;

use super::{AudioError, Waveform};

const WAVE_FORMAT_PCM: u16 = 0x0001;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct Format {
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn parse_fmt(body: &[u8]) -> Result<Format, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::Malformed(format!(
            "fmt chunk too short ({} bytes)",
            body.len()
        )));
    }
    let mut tag = le_u16(body, 0);
    if tag == WAVE_FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the subformat GUID,
        // whose first two bytes carry the format tag.
        if body.len() < 26 {
            return Err(AudioError::Malformed(
                "truncated extensible fmt chunk".into(),
            ));
        }
        tag = le_u16(body, 24);
    }
    if tag != WAVE_FORMAT_PCM {
        return Err(AudioError::UnsupportedFormat(tag));
    }
    Ok(Format {
        channels: le_u16(body, 2),
        sample_rate: le_u32(body, 4),
        bits: le_u16(body, 14),
    })
}

/// Decodes a mono 16-bit PCM WAV image. Samples are normalized by 1/32768.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::Malformed("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12;
    let mut format = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let start = pos + 8;
        let end = start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                AudioError::Malformed(format!(
                    "chunk {:?} claims {size} bytes past end of file",
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

    let format = format.ok_or_else(|| AudioError::Malformed("missing fmt chunk".into()))?;
    if format.channels != 1 {
        return Err(AudioError::UnsupportedChannels(format.channels));
    }
    if format.bits != 16 {
        return Err(AudioError::UnsupportedBitDepth(format.bits));
    }
    if format.sample_rate == 0 {
        return Err(AudioError::Malformed("zero sample rate".into()));
    }
    let data = data.ok_or_else(|| AudioError::Malformed("missing data chunk".into()))?;
    if data.len() % 2 != 0 {
        return Err(AudioError::Malformed("odd-sized 16-bit data chunk".into()));
    }
    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    Ok(Waveform::new(samples, format.sample_rate))
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    decode_wav(&fs::read(path)?)
}

/// Quantizes one sample: round half away from zero, saturating at the
/// 16-bit limits.
pub(crate) fn quantize(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes a waveform as a canonical 44-byte-header mono 16-bit PCM WAV.
pub fn encode_wav(w: &Waveform) -> Result<Vec<u8>, AudioError> {
    if let Some((index, value)) = w.first_out_of_range() {
        return Err(AudioError::OutOfRange { index, value });
    }
    let data_len = (w.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &w.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    Ok(out)
}

pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let bytes = encode_wav(w)?;
    fs::write(path, bytes)?;
    Ok(())
}
