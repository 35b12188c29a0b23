//! Binary greyscale PGM (`P5`, maxval 255).

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;

#[derive(Clone, Debug, PartialEq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    /// Row-major values in `[0, 1]`.
    pub values: Vec<f64>,
}

/// Values are clamped to `[0, 1]` and scaled linearly to `0..=255`.
pub fn encode_pgm(values: &[f64], width: usize, height: usize) -> Result<Vec<u8>> {
    if width == 0 || height == 0 || values.len() != width * height {
        return Err(Error::dim("write_pgm", format!("{} values for a {width}x{height} image", values.len())));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("NaN pixel in PGM output".into()));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn write_pgm(values: &[f64], width: usize, height: usize, path: &Path) -> Result<()> {
    write_atomic(path, &encode_pgm(values, width, height)?)
}

/// Parses a `P5` file with maxval at most 255; `#` comments are allowed in the header.
pub fn parse_pgm(bytes: &[u8]) -> Result<PgmImage> {
    let mut pos = 0;
    let mut token = || -> Result<&[u8]> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Format("truncated PGM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|c| !c.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(&bytes[start..pos])
    };
    if token()? != b"P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let mut number = |what: &str| -> Result<usize> {
        let t = token()?;
        std::str::from_utf8(t)
            .ok()
            .filter(|s| s.len() <= 9 && s.bytes().all(|c| c.is_ascii_digit()))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad PGM {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM {width}x{height} maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let n = width * height;
    let raster = bytes.get(start..).filter(|r| r.len() == n).ok_or_else(|| {
        Error::Format(format!("PGM raster must hold exactly {n} bytes"))
    })?;
    if let Some(v) = raster.iter().find(|&&v| usize::from(v) > maxval) {
        return Err(Error::Format(format!("PGM sample {v} exceeds maxval {maxval}")));
    }
    let values = raster.iter().map(|&v| f64::from(v) / maxval as f64).collect();
    Ok(PgmImage { width, height, values })
}

pub fn read_pgm(path: &Path) -> Result<PgmImage> {
    parse_pgm(&std::fs::read(path)?)
}
