//! RIFF/WAVE reader and writer restricted to 16-bit PCM mono.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pcm16 {
    pub sample_rate: u32,
    pub samples: Vec<i16>,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Pcm16> {
    let malformed = |why: &str| Error::decode(path, format!("malformed WAV: {why}"));
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE header"));
    }
    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(size).ok_or_else(|| malformed("chunk size overflow"))?;
        if end > bytes.len() {
            return Err(malformed("chunk runs past end of file"));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(malformed("short fmt chunk"));
                }
                format = Some((
                    u16_at(bytes, body),
                    u16_at(bytes, body + 2),
                    u32_at(bytes, body + 4),
                    u16_at(bytes, body + 14),
                ));
            }
            b"data" => {
                let (tag, channels, sample_rate, bits) =
                    format.ok_or_else(|| malformed("data chunk before fmt chunk"))?;
                if tag != 1 {
                    return Err(malformed(&format!("format tag {tag} is not PCM")));
                }
                if channels != 1 {
                    return Err(malformed(&format!("{channels} channels, expected mono")));
                }
                if bits != 16 {
                    return Err(Error::UnsupportedBitDepth(format!("{bits}-bit PCM, expected 16")));
                }
                let samples: Vec<i16> = bytes[body..end]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]))
                    .collect();
                if samples.is_empty() {
                    return Err(Error::EmptySignal);
                }
                return Ok(Pcm16 { sample_rate, samples });
            }
            _ => {}
        }
        // chunks are word aligned
        pos = end + (size & 1);
    }
    Err(malformed("no data chunk"))
}

pub fn encode(pcm: &Pcm16) -> Vec<u8> {
    let data_len = (pcm.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&pcm.sample_rate.to_le_bytes());
    out.extend_from_slice(&(pcm.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in &pcm.samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn write(path: &Path, pcm: &Pcm16) -> Result<()> {
    std::fs::write(path, encode(pcm)).map_err(|e| Error::io(path, e))
}
