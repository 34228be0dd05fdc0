//! Binary 16-bit PGM ("P5", maxval 65535, big-endian samples).

use std::path::Path;

use crate::error::{Error, Result};

/// A decoded 16-bit grayscale raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster16 {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<u16>,
}

pub fn encode(width: usize, height: usize, samples: &[u16]) -> Vec<u8> {
    debug_assert_eq!(width * height, samples.len());
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(samples.len() * 2);
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

/// Parses a P5 buffer. `path` is only used to label errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Raster16> {
    let mut pos = 0usize;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::parse(path, 0, "malformed header: expected magic P5"));
    }
    pos += 2;
    let mut fields = [0usize; 3];
    for (k, field) in fields.iter_mut().enumerate() {
        skip_space_and_comments(bytes, &mut pos);
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(
                path,
                pos,
                format!("malformed header: expected {}", ["width", "height", "maxval"][k]),
            ));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(path, start, "malformed header: number too large"))?;
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::parse(path, pos, "malformed header: missing separator before data"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::parse(path, pos, "malformed header: zero dimension"));
    }
    if maxval != 65535 {
        return Err(Error::parse(
            path,
            pos,
            format!("malformed header: maxval {maxval}, expected 65535"),
        ));
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(2))
        .ok_or_else(|| Error::parse(path, pos, "malformed header: dimensions overflow"))?;
    let data = &bytes[pos..];
    if data.len() != need {
        return Err(Error::parse(
            path,
            pos,
            format!(
                "dimension mismatch: {} data bytes for {width}x{height} 16-bit samples",
                data.len()
            ),
        ));
    }
    let samples = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(Raster16 {
        width,
        height,
        samples,
    })
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        if bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        } else if bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
}

pub fn read(path: &Path) -> Result<Raster16> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn write(path: &Path, width: usize, height: usize, samples: &[u16]) -> Result<()> {
    super::write_atomic(path, &encode(width, height, samples))
}
