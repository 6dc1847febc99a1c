//! Binary portable graymap (P5) input and output.

use std::io::{Read, Write};
use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok().filter(|t| !t.is_empty())
    }
}

/// Decodes a P5 image and rescales samples to `[0, 1]` by `maxval`.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let bad = |msg: &str| Error::parse(path, 1, format!("not a binary PGM image: {msg}"));
    let mut h = Header { bytes, pos: 0 };
    if h.token() != Some("P5") {
        return Err(bad("missing P5 magic"));
    }
    let mut number = |what: &str| -> Result<usize> {
        h.token()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(&format!("invalid {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if !(1..=65535).contains(&maxval) {
        return Err(bad("maxval out of range"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = h.pos + 1;
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(sample_bytes))
        .ok_or_else(|| bad("dimensions overflow"))?;
    let raster = bytes
        .get(start..)
        .filter(|r| r.len() >= needed)
        .ok_or_else(|| bad("truncated raster"))?;
    let scale = maxval as f64;
    let pixels = if sample_bytes == 1 {
        raster[..needed].iter().map(|&b| f64::from(b) / scale).collect()
    } else {
        raster[..needed]
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / scale)
            .collect()
    };
    GrayImage::new(height, width, pixels)
        .map_err(|e| Error::parse(path, 1, format!("unusable image: {e}")))
}

pub fn read_pgm<R: Read>(mut reader: R, path: &Path) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

/// Encodes with maxval 255, rounding each sample.
pub fn write_pgm<W: Write>(mut out: W, img: &GrayImage) -> std::io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", img.width(), img.height())?;
    let raster: Vec<u8> = img.pixels().iter().map(|&p| (p * 255.0).round() as u8).collect();
    out.write_all(&raster)
}
