//! IDX containers: big-endian header, `u8` images and labels, and a
//! double-precision variant for synthetic fields.

use std::io;
use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;
/// Type code `0x0E` (f64), three dimensions.
pub const IDX_F64_MAGIC: u32 = 0x0000_0E03;

/// Decoded image container with pixels scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

fn truncated(what: &str) -> Error {
    Error::Io(io::Error::new(io::ErrorKind::UnexpectedEof, format!("truncated IDX {what}")))
}

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
}

/// Returns the dimensions after checking the magic and the exact body size.
fn header(bytes: &[u8], magic: u32, ndim: usize, elem: usize, what: &str) -> Result<(Vec<usize>, usize)> {
    let found = be_u32(bytes, 0).ok_or_else(|| truncated(what))?;
    if found != magic {
        return Err(Error::Format(format!("IDX {what}: magic {found:#010x}, expected {magic:#010x}")));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| be_u32(bytes, 4 + 4 * i).map(|d| d as usize).ok_or_else(|| truncated(what)))
        .collect::<Result<_>>()?;
    let start = 4 + 4 * ndim;
    let body = dims
        .iter()
        .try_fold(elem, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("IDX {what}: dimensions overflow")))?;
    let have = bytes.len() - start;
    if have < body {
        return Err(truncated(what));
    }
    if have > body {
        return Err(Error::Format(format!("IDX {what}: {} trailing bytes", have - body)));
    }
    Ok((dims, start))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let (dims, start) = header(bytes, IDX_IMAGE_MAGIC, 3, 1, "images")?;
    Ok(IdxImages {
        count: dims[0],
        rows: dims[1],
        cols: dims[2],
        pixels: bytes[start..].iter().map(|&b| f64::from(b) / 255.0).collect(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let (_, start) = header(bytes, IDX_LABEL_MAGIC, 1, 1, "labels")?;
    Ok(bytes[start..].to_vec())
}

pub fn parse_idx_f64(bytes: &[u8]) -> Result<IdxImages> {
    let (dims, start) = header(bytes, IDX_F64_MAGIC, 3, 8, "f64 images")?;
    let pixels: Vec<f64> =
        bytes[start..].chunks_exact(8).map(|c| f64::from_be_bytes(c.try_into().expect("8 bytes"))).collect();
    if pixels.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("IDX f64 images: non-finite value".into()));
    }
    Ok(IdxImages { count: dims[0], rows: dims[1], cols: dims[2], pixels })
}

fn to_dataset(img: IdxImages, split: Split, provenance: String) -> Result<Dataset> {
    if img.rows != img.cols {
        return Err(Error::dim("load_idx", format!("images must be square, got {}x{}", img.rows, img.cols)));
    }
    Dataset::new(img.rows, split, provenance, img.pixels)
}

/// Loads `u8` images, and labels when given (counts must agree).
pub fn load_idx(images: &Path, labels: Option<&Path>, split: Split) -> Result<Dataset> {
    let img = parse_idx_images(&std::fs::read(images)?)?;
    let count = img.count;
    let mut ds = to_dataset(img, split, images.display().to_string())?;
    if let Some(lp) = labels {
        let l = parse_idx_labels(&std::fs::read(lp)?)?;
        if l.len() != count {
            return Err(Error::dim("load_idx", format!("{count} images but {} labels", l.len())));
        }
        ds.labels = Some(l);
    }
    Ok(ds)
}

pub fn load_idx_f64(path: &Path, split: Split) -> Result<Dataset> {
    to_dataset(parse_idx_f64(&std::fs::read(path)?)?, split, path.display().to_string())
}

fn encode_header(magic: u32, dims: &[usize]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out
}

/// `pixels` are quantized with `round(255 * clamp(v, 0, 1))`.
pub fn encode_idx_images(count: usize, rows: usize, cols: usize, pixels: &[f64]) -> Vec<u8> {
    let mut out = encode_header(IDX_IMAGE_MAGIC, &[count, rows, cols]);
    out.extend(pixels.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = encode_header(IDX_LABEL_MAGIC, &[labels.len()]);
    out.extend_from_slice(labels);
    out
}

pub fn encode_idx_f64(count: usize, rows: usize, cols: usize, values: &[f64]) -> Vec<u8> {
    let mut out = encode_header(IDX_F64_MAGIC, &[count, rows, cols]);
    for v in values {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}
