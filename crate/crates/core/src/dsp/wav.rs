//! RIFF/WAVE reader and writer for 16-bit PCM mono 16 kHz audio.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{AudioClip, SAMPLE_RATE};

const FULL_SCALE: f32 = 32767.0;

/// Serializes audio as a canonical 44-byte-header WAV file.
pub fn encode(audio: &AudioClip) -> Vec<u8> {
    let data_len = (audio.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in audio.samples() {
        let q = (s.clamp(-1.0, 1.0) * FULL_SCALE).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Parses a WAV file, accepting only PCM 16-bit mono 16 kHz. Unknown chunks
/// are skipped.
pub fn decode(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 {
        return Err(Error::format(format!("wav: {} bytes is too short for a RIFF header", bytes.len())));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::format("wav: missing RIFF/WAVE signature"));
    }
    let mut pos = 12;
    let mut fmt_seen = false;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return Err(Error::format(format!(
                "wav: chunk `{}` claims {size} bytes but only {} remain",
                String::from_utf8_lossy(id),
                bytes.len() - body
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::format(format!("wav: fmt chunk of {size} bytes is truncated")));
                }
                let format = u16_at(bytes, body);
                let channels = u16_at(bytes, body + 2);
                let rate = u32_at(bytes, body + 4);
                let bits = u16_at(bytes, body + 14);
                if format != 1 {
                    return Err(Error::format(format!("wav: format tag {format} is not PCM (1)")));
                }
                if channels != 1 {
                    return Err(Error::format(format!("wav: {channels} channels, expected mono")));
                }
                if rate != SAMPLE_RATE {
                    return Err(Error::format(format!("wav: sample rate {rate} Hz, expected {SAMPLE_RATE}")));
                }
                if bits != 16 {
                    return Err(Error::format(format!("wav: {bits} bits per sample, expected 16")));
                }
                fmt_seen = true;
            }
            b"data" => {
                if !fmt_seen {
                    return Err(Error::format("wav: data chunk precedes fmt chunk"));
                }
                if !size.is_multiple_of(2) {
                    return Err(Error::format("wav: odd-sized 16-bit data chunk"));
                }
                let samples = bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|c| (i16::from_le_bytes([c[0], c[1]]) as f32 / FULL_SCALE).max(-1.0))
                    .collect();
                return AudioClip::new(samples);
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    Err(Error::format(if fmt_seen {
        "wav: no data chunk"
    } else {
        "wav: truncated header (no fmt chunk)"
    }))
}

pub fn wav_write(path: impl AsRef<Path>, audio: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(audio)).map_err(|e| Error::io(path, e))
}

pub fn wav_read(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_scale_quantization() {
        let bytes = encode(&AudioClip::new(vec![0.5]).unwrap());
        assert_eq!(i16::from_le_bytes([bytes[44], bytes[45]]), 16384);
        let back = decode(&bytes).unwrap();
        assert!((back.samples()[0] - 0.5).abs() <= 1.0 / 32768.0);
        assert!((back.samples()[0] - 16384.0 / 32767.0).abs() < 1e-7);
    }

    #[test]
    fn rejects_non_pcm_stereo_and_wrong_rate() {
        let good = encode(&AudioClip::new(vec![0.0; 4]).unwrap());
        let mut float = good.clone();
        float[20] = 3;
        assert!(decode(&float).unwrap_err().to_string().contains("PCM"));
        let mut stereo = good.clone();
        stereo[22] = 2;
        assert!(decode(&stereo).unwrap_err().to_string().contains("mono"));
        let mut rate = good.clone();
        rate[24..28].copy_from_slice(&44_100u32.to_le_bytes());
        assert!(decode(&rate).unwrap_err().to_string().contains("44100"));
        assert!(decode(&good[..30]).is_err());
        assert!(decode(&good[..8]).is_err());
    }

    #[test]
    fn skips_unknown_chunks() {
        let good = encode(&AudioClip::new(vec![0.25, -0.25]).unwrap());
        let mut with_list = good[..36].to_vec();
        with_list.extend_from_slice(b"LIST");
        with_list.extend_from_slice(&3u32.to_le_bytes());
        with_list.extend_from_slice(&[1, 2, 3, 0]);
        with_list.extend_from_slice(&good[36..]);
        assert_eq!(decode(&with_list).unwrap(), decode(&good).unwrap());
    }
}
