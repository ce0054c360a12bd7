//! Binary netpbm (P5 grayscale, P6 RGB) with 8-bit samples.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Interleaved, row-major samples.
    pub data: Vec<u8>,
}

pub fn is_pnm(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == b'P' && (bytes[1] == b'5' || bytes[1] == b'6')
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Option<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()?.parse().ok()
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Raster> {
    if !is_pnm(bytes) {
        return Err(Error::decode(path, "not a binary PGM/PPM file"));
    }
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut header = Header { bytes, pos: 2 };
    let malformed = || Error::decode(path, "malformed PNM header");
    let width = header.number().ok_or_else(malformed)?;
    let height = header.number().ok_or_else(malformed)?;
    let maxval = header.number().ok_or_else(malformed)?;
    if maxval != 255 {
        return Err(Error::UnsupportedBitDepth(format!("PNM maxval {maxval}, expected 255")));
    }
    if width == 0 || height == 0 {
        return Err(Error::decode(path, "zero-sized image"));
    }
    // exactly one whitespace byte separates the header from the raster
    if header.pos >= bytes.len() || !bytes[header.pos].is_ascii_whitespace() {
        return Err(malformed());
    }
    let start = header.pos + 1;
    let len = width * height * channels;
    if bytes.len() < start + len {
        return Err(Error::decode(
            path,
            format!("truncated raster: expected {len} bytes, found {}", bytes.len() - start),
        ));
    }
    Ok(Raster {
        width,
        height,
        channels,
        data: bytes[start..start + len].to_vec(),
    })
}

pub fn encode(raster: &Raster) -> Vec<u8> {
    let magic = if raster.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", raster.width, raster.height).into_bytes();
    out.extend_from_slice(&raster.data);
    out
}

pub fn write(path: &Path, raster: &Raster) -> Result<()> {
    std::fs::write(path, encode(raster)).map_err(|e| Error::io(path, e))
}
