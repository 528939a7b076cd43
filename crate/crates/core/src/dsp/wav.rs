//! RIFF/WAVE PCM16 reader and canonical 44-byte-header writer.

use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(format!("wav: {}", msg.into()))
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Decode PCM16 WAV bytes; multi-channel input is averaged to mono.
pub fn wav_read_bytes<T: Scalar>(bytes: &[u8]) -> Result<Waveform<T>> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        let head: Vec<u8> = bytes.iter().take(12).copied().collect();
        return Err(fmt_err(format!("missing RIFF/WAVE signature (first bytes {head:02x?})")));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(size).filter(|&e| e <= bytes.len());
        match id {
            b"fmt " => {
                end.ok_or_else(|| fmt_err(format!("fmt chunk of {size} bytes overruns file")))?;
                if size < 16 {
                    return Err(fmt_err(format!("fmt chunk too small ({size} bytes)")));
                }
                let mut format = u16_at(bytes, body);
                if format == 0xFFFE && size >= 26 {
                    format = u16_at(bytes, body + 24);
                }
                fmt = Some((format, u16_at(bytes, body + 2), u32_at(bytes, body + 4), u16_at(bytes, body + 14)));
            }
            b"data" => {
                // tolerate a data size that overruns a truncated file
                let end = end.unwrap_or(bytes.len());
                data = Some(&bytes[body..end]);
            }
            _ => {}
        }
        pos = body + size + (size & 1);
        if data.is_some() && fmt.is_some() {
            break;
        }
    }
    let (format, channels, rate, bits) = fmt.ok_or_else(|| fmt_err("no fmt chunk"))?;
    let data = data.ok_or_else(|| fmt_err("no data chunk"))?;
    if format != 1 {
        return Err(fmt_err(format!("unsupported codec {format:#06x}; only PCM (1) is read")));
    }
    if bits != 16 {
        return Err(fmt_err(format!("unsupported bit depth {bits}; only 16-bit PCM is read")));
    }
    if channels == 0 {
        return Err(fmt_err("fmt chunk declares zero channels"));
    }
    let ch = channels as usize;
    if channels > 1 {
        log::warn!("wav has {channels} channels; averaging to mono");
    }
    let frame_bytes = 2 * ch;
    let scale = 1.0 / 32768.0;
    let samples: Vec<T> = data
        .chunks_exact(frame_bytes)
        .map(|f| {
            let sum: f64 = f.chunks_exact(2).map(|s| i16::from_le_bytes([s[0], s[1]]) as f64).sum();
            T::of(sum / ch as f64 * scale)
        })
        .collect();
    if samples.is_empty() {
        return Err(fmt_err("data chunk holds no samples"));
    }
    Waveform::new(samples, rate)
}

pub fn wav_read<T: Scalar>(path: impl AsRef<Path>) -> Result<Waveform<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    wav_read_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{m} in {}", path.display())),
        other => other,
    })
}

/// Encode as PCM16 mono little-endian with a 44-byte header. Samples are clipped
/// to `[-1, 32767/32768]` and rounded half away from zero.
pub fn wav_write_bytes<T: Scalar>(w: &Waveform<T>) -> Vec<u8> {
    let n = w.samples.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    let hi = 32767.0 / 32768.0;
    for &s in &w.samples {
        let v = s.to_f64_lossy();
        let v = if v.is_nan() { 0.0 } else { v.clamp(-1.0, hi) };
        let q = (v * 32768.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn wav_write<T: Scalar>(path: impl AsRef<Path>, w: &Waveform<T>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, wav_write_bytes(w)).map_err(|e| Error::io(path, e))
}
