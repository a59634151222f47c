//! Mono 16-bit PCM RIFF/WAVE.

use std::fs;
use std::path::Path;

use crate::dsp::Signal;
use crate::error::{Error, Result};

const PCM_FORMAT: u16 = 1;
const FULL_SCALE: f64 = 32768.0;

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct Fmt {
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn parse_fmt(body: &[u8]) -> Result<Fmt> {
    if body.len() < 16 {
        return format_err(format!(
            "fmt chunk is {} bytes, needs at least 16",
            body.len()
        ));
    }
    let tag = u16_at(body, 0);
    if tag != PCM_FORMAT {
        return format_err(format!(
            "fmt chunk format tag {tag:#06x} is not PCM (0x0001)"
        ));
    }
    Ok(Fmt {
        channels: u16_at(body, 2),
        sample_rate: u32_at(body, 4),
        bits: u16_at(body, 14),
    })
}

/// Parses a WAV image held in memory.
pub fn decode_wav(bytes: &[u8]) -> Result<Signal> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return format_err("missing RIFF/WAVE header");
    }
    let mut pos = 12;
    let mut fmt: Option<Fmt> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let available = bytes.len() - body_start;
        let name = String::from_utf8_lossy(id).into_owned();
        match id {
            b"fmt " => {
                if size > available {
                    return format_err(format!(
                        "fmt chunk declares {size} bytes but only {available} are present"
                    ));
                }
                fmt = Some(parse_fmt(&bytes[body_start..body_start + size])?);
            }
            b"data" => {
                let Some(f) = &fmt else {
                    return format_err("data chunk appears before the fmt chunk");
                };
                if f.channels != 1 {
                    return format_err(format!(
                        "expected mono audio, fmt chunk declares {} channels",
                        f.channels
                    ));
                }
                if f.bits != 16 {
                    return format_err(format!(
                        "expected 16-bit samples, fmt chunk declares {} bits",
                        f.bits
                    ));
                }
                if size > available {
                    return format_err(format!(
                        "data chunk truncated: expected {size} bytes, found {available}"
                    ));
                }
                if !size.is_multiple_of(2) {
                    return format_err(format!("data chunk has odd byte count {size}"));
                }
                let samples = bytes[body_start..body_start + size]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / FULL_SCALE)
                    .collect();
                return Signal::new(samples, f.sample_rate)
                    .map_err(|e| Error::Format(format!("fmt chunk: {e}")));
            }
            _ => {
                if size > available {
                    return format_err(format!(
                        "chunk {name:?} declares {size} bytes but only {available} are present"
                    ));
                }
            }
        }
        // chunks are padded to even length
        pos = body_start + size + (size & 1);
    }
    if fmt.is_none() {
        format_err("no fmt chunk found")
    } else {
        format_err("no data chunk found")
    }
}

/// Quantizes a signal to PCM16. Returns the image and the number of samples
/// that had to be clipped to full scale.
pub fn encode_wav(signal: &Signal) -> (Vec<u8>, usize) {
    let n = signal.len();
    let data_len = (2 * n) as u32;
    let mut out = Vec::with_capacity(44 + 2 * n);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM_FORMAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    let sr = signal.sample_rate();
    out.extend_from_slice(&sr.to_le_bytes());
    out.extend_from_slice(&(sr * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    let mut clipped = 0;
    for &v in signal.samples() {
        let q = (v * FULL_SCALE).round();
        let q = if q > i16::MAX as f64 {
            clipped += 1;
            i16::MAX
        } else if q < i16::MIN as f64 {
            clipped += 1;
            i16::MIN
        } else {
            q as i16
        };
        out.extend_from_slice(&q.to_le_bytes());
    }
    (out, clipped)
}

/// The signal as it reads back after a PCM16 round trip.
pub fn quantize(signal: &Signal) -> Signal {
    decode_wav(&encode_wav(signal).0).expect("encoder output always parses")
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_wav(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Writes PCM16 and returns the clipped sample count.
pub fn write_wav(path: impl AsRef<Path>, signal: &Signal) -> Result<usize> {
    let (bytes, clipped) = encode_wav(signal);
    fs::write(path, bytes)?;
    Ok(clipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone() -> Signal {
        Signal::new(
            (0..16_000)
                .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 16_000.0).sin())
                .collect(),
            16_000,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_idempotent() {
        let (first, clipped) = encode_wav(&tone());
        assert_eq!(clipped, 0);
        let back = decode_wav(&first).unwrap();
        assert_eq!(back.sample_rate(), 16_000);
        assert_eq!(encode_wav(&back).0, first);
    }

    #[test]
    fn clipping_is_counted() {
        let s = Signal::new(vec![1.0, -1.0, 2.0, -3.0, 0.0], 8000).unwrap();
        let (bytes, clipped) = encode_wav(&s);
        assert_eq!(clipped, 3);
        let back = decode_wav(&bytes).unwrap();
        assert_eq!(back.samples()[0], 32767.0 / 32768.0);
        assert_eq!(back.samples()[1], -1.0);
    }

    #[test]
    fn stereo_is_rejected_with_channel_count() {
        let (mut bytes, _) = encode_wav(&tone());
        bytes[22] = 2;
        let msg = decode_wav(&bytes).unwrap_err().to_string();
        assert!(msg.contains("2 channels"), "{msg}");
    }

    #[test]
    fn truncated_data_names_byte_counts() {
        let (bytes, _) = encode_wav(&tone());
        let msg = decode_wav(&bytes[..1000]).unwrap_err().to_string();
        assert!(msg.contains("expected 32000 bytes, found 956"), "{msg}");
    }

    #[test]
    fn unknown_chunks_are_skipped() {
        let (bytes, _) = encode_wav(&tone());
        let mut with_list = bytes[..36].to_vec();
        with_list.extend_from_slice(b"LIST");
        with_list.extend_from_slice(&3u32.to_le_bytes());
        with_list.extend_from_slice(&[1, 2, 3, 0]);
        with_list.extend_from_slice(&bytes[36..]);
        assert_eq!(decode_wav(&with_list).unwrap(), decode_wav(&bytes).unwrap());
    }

    #[test]
    fn malformed_headers() {
        assert!(decode_wav(b"RIFX").is_err());
        let (mut bytes, _) = encode_wav(&tone());
        bytes[20] = 3;
        assert!(decode_wav(&bytes)
            .unwrap_err()
            .to_string()
            .contains("format tag"));
        let (mut bytes, _) = encode_wav(&tone());
        bytes[34] = 24;
        assert!(decode_wav(&bytes)
            .unwrap_err()
            .to_string()
            .contains("24 bits"));
    }
}
