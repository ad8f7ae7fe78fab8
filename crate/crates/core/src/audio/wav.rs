//! Minimal RIFF/WAVE reader and writer for 16-bit PCM mono at 16 kHz.
//!
//! Integer samples map to floats by division by 32768, so values always lie
//! in [−1, 1). Unknown RIFF chunks are skipped; anything that is not plain
//! PCM16 mono 16 kHz is rejected with an error naming the offending field —
//! no silent resampling or downmixing.

use std::fs;
use std::path::Path;

use crate::error::Error;
use crate::tensor::Tensor;
use crate::Result;

pub const SAMPLE_RATE: u32 = 16000;
const SCALE: f64 = 32768.0;

/// A mono waveform with its sample rate. Samples are a plain vector —
/// possibly empty — and convert to a model-input tensor via [`Waveform::tensor`].
#[derive(Debug, Clone)]
pub struct Waveform {
    /// Values in [−1, 1].
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Waveform {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    /// The samples as a `[len]` tensor. Empty audio has no tensor form.
    pub fn tensor(&self) -> Result<Tensor> {
        if self.samples.is_empty() {
            return Err(Error::data("empty waveform has no tensor form"));
        }
        Tensor::from_vec(&[self.samples.len()], self.samples.clone())
    }
}

fn truncated(path: &Path, what: &str) -> Error {
    Error::parse(path.display().to_string(), 0, format!("truncated: {what}"))
}

fn read_u16(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn read_u32(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Read a PCM16 mono 16 kHz WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.len() < 12 {
        return Err(truncated(path, "file shorter than the RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::format(format!(
            "{}: not a RIFF/WAVE file",
            path.display()
        )));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut off = 12;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = read_u32(&bytes, off + 4) as usize;
        let body_start = off + 8;
        if body_start + size > bytes.len() {
            return Err(truncated(
                path,
                &format!(
                    "chunk {} declares {} bytes but only {} remain",
                    String::from_utf8_lossy(id),
                    size,
                    bytes.len() - body_start
                ),
            ));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(truncated(path, "fmt chunk shorter than 16 bytes"));
                }
                fmt = Some((
                    read_u16(&bytes, body_start),
                    read_u16(&bytes, body_start + 2),
                    read_u32(&bytes, body_start + 4),
                    read_u16(&bytes, body_start + 14),
                ));
            }
            b"data" => data = Some(&bytes[body_start..body_start + size]),
            _ => {} // skip unknown chunks (LIST, fact, …)
        }
        // chunks are word-aligned: odd sizes carry a pad byte
        off = body_start + size + (size % 2);
    }

    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| truncated(path, "missing fmt chunk"))?;
    let data = data.ok_or_else(|| truncated(path, "missing data chunk"))?;
    let field_err = |field: &str, got: String, want: &str| {
        Err(Error::format(format!(
            "{}: {field} is {got}, need {want}",
            path.display()
        )))
    };
    if format != 1 {
        return field_err("audio format", format.to_string(), "1 (PCM)");
    }
    if channels != 1 {
        return field_err("channels", channels.to_string(), "1 (mono)");
    }
    if rate != SAMPLE_RATE {
        return field_err("sample rate", rate.to_string(), "16000 Hz");
    }
    if bits != 16 {
        return field_err("bit depth", bits.to_string(), "16");
    }
    if data.len() % 2 != 0 {
        return Err(truncated(path, "data chunk has an odd byte count"));
    }

    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / SCALE)
        .collect();
    Ok(Waveform::new(samples, SAMPLE_RATE))
}

/// Write a PCM16 mono WAV file. Samples are clamped to [−1, 1] and rounded
/// to the nearest representable 16-bit value.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let n = w.len();
    let data_len = (n * 2) as u32;
    let mut bytes = Vec::with_capacity(44 + n * 2);
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + data_len).to_le_bytes());
    bytes.extend_from_slice(b"WAVE");
    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
    bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
    bytes.extend_from_slice(&w.sample_rate.to_le_bytes());
    bytes.extend_from_slice(&(w.sample_rate * 2).to_le_bytes()); // byte rate
    bytes.extend_from_slice(&2u16.to_le_bytes()); // block align
    bytes.extend_from_slice(&16u16.to_le_bytes()); // bits
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&data_len.to_le_bytes());
    for &v in &w.samples {
        let q = (v.clamp(-1.0, 1.0) * SCALE).round().clamp(-32768.0, 32767.0) as i16;
        bytes.extend_from_slice(&q.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}
