//! 16-bit PCM RIFF/WAVE files, mono or stereo.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Samples are `i16 / 2^15`, so values lie in `[−1, 1)`.
pub const FULL_SCALE: f64 = 32768.0;

/// Decoded audio: `channels × samples` in `[−1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub samples: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

fn wav_err(path: &Path, chunk: &'static str, message: impl Into<String>) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        chunk,
        message: message.into(),
    }
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Parses a WAV file image; `path` only labels errors.
pub fn decode_wav(bytes: &[u8], path: &Path) -> Result<Audio> {
    if bytes.len() < 12 {
        return Err(wav_err(path, "RIFF", "truncated header"));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(wav_err(path, "RIFF", "not a RIFF/WAVE file"));
    }
    let mut pos = 12;
    let mut format: Option<(u16, u32)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(size).filter(|&e| e <= bytes.len());
        match id {
            b"fmt " => {
                let end = end.ok_or_else(|| wav_err(path, "fmt", "truncated chunk"))?;
                if size < 16 {
                    return Err(wav_err(path, "fmt", format!("chunk of {size} bytes is too short")));
                }
                let tag = u16_at(bytes, body);
                let channels = u16_at(bytes, body + 2);
                let rate = u32_at(bytes, body + 4);
                let bits = u16_at(bytes, body + 14);
                let tag = if tag == 0xFFFE && size >= 40 { u16_at(bytes, body + 24) } else { tag };
                if tag != 1 {
                    return Err(wav_err(path, "fmt", format!("unsupported encoding tag {tag} (PCM only)")));
                }
                if bits != 16 {
                    return Err(wav_err(path, "fmt", format!("unsupported {bits}-bit samples (16-bit only)")));
                }
                if channels == 0 || channels > 2 {
                    return Err(wav_err(path, "fmt", format!("unsupported channel count {channels}")));
                }
                if rate == 0 {
                    return Err(wav_err(path, "fmt", "zero sample rate"));
                }
                format = Some((channels, rate));
                pos = end + (size & 1);
            }
            b"data" => {
                let (channels, rate) = format.ok_or_else(|| wav_err(path, "data", "data chunk before fmt chunk"))?;
                let end = end.ok_or_else(|| wav_err(path, "data", "truncated chunk"))?;
                let c = channels as usize;
                if size % (2 * c) != 0 {
                    return Err(wav_err(path, "data", "size is not a whole number of frames"));
                }
                let frames = size / (2 * c);
                let mut samples = vec![Vec::with_capacity(frames); c];
                for (i, pair) in bytes[body..end].chunks_exact(2).enumerate() {
                    let v = i16::from_le_bytes([pair[0], pair[1]]);
                    samples[i % c].push(v as f64 / FULL_SCALE);
                }
                return Ok(Audio {
                    samples,
                    sample_rate: rate,
                });
            }
            _ => {
                let end = end.ok_or_else(|| wav_err(path, "RIFF", "truncated chunk"))?;
                pos = end + (size & 1);
            }
        }
    }
    Err(wav_err(path, if format.is_some() { "data" } else { "fmt" }, "chunk missing"))
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<Audio> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes, path)
}

/// Nearest 16-bit code of `x`, saturating outside `[−1, 1)`.
pub fn quantize(x: f64) -> i16 {
    (x * FULL_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Serializes `samples` (`channels × samples`, 1 or 2 channels).
pub fn encode_wav(samples: &[Vec<f64>], sample_rate: u32) -> Result<Vec<u8>> {
    let c = samples.len();
    if c == 0 || c > 2 {
        return Err(Error::Data(format!("cannot write {c} channels (mono or stereo only)")));
    }
    let n = samples[0].len();
    if samples.iter().any(|ch| ch.len() != n) {
        return Err(Error::Data("channels differ in length".into()));
    }
    let data_len = n * c * 2;
    let riff_len = u32::try_from(36 + data_len).map_err(|_| Error::Data("signal too long for a WAV file".into()))?;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&riff_len.to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&(c as u16).to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * c as u32 * 2).to_le_bytes());
    out.extend_from_slice(&(c as u16 * 2).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..n {
        for ch in samples {
            out.extend_from_slice(&quantize(ch[i]).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_wav(path: impl AsRef<Path>, samples: &[Vec<f64>], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wav(samples, sample_rate)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
