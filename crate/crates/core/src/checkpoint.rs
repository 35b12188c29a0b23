//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MSKO" | version u32 | sampler tag u8 | n u32 | d u32 | k u32
//! sampler arrays as f64, declaration order
//! [ decoder tag u8 | width u32 | decoder arrays as f64 ]   (optional)
//! ```

use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::{Decoder, DecoderKind};
use crate::samplers::{SamplerKind, SamplerParams};

pub const MAGIC: &[u8; 4] = b"MSKO";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 3 * 4;
const DECODER_HEADER_LEN: usize = 1 + 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub sampler: SamplerParams,
    pub decoder: Option<Decoder>,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let s = &self.sampler;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(s.kind().tag());
        for v in [s.side(), s.latent_dim(), s.repr_width()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        push_arrays(&mut out, s.params());
        if let Some(dec) = &self.decoder {
            out.push(dec.kind().tag());
            out.extend_from_slice(&(dec.width() as u32).to_le_bytes());
            push_arrays(&mut out, dec.params());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let kind = SamplerKind::from_tag(r.u8()?)?;
        let side = r.u32()? as usize;
        let d = r.u32()? as usize;
        let k = r.u32()? as usize;
        if side == 0 {
            return Err(Error::Format("image side must be positive".into()));
        }
        if kind == SamplerKind::Vanilla || kind == SamplerKind::Hypernet {
            if d >= side.saturating_mul(side) {
                return Err(Error::Format(format!("latent dim {d} not below pixel count")));
            }
        }
        let shapes = SamplerParams::param_shapes(kind, side, d, k)?;
        let body = byte_len(&shapes)?;
        let rest = bytes.len() - HEADER_LEN;
        if rest < body {
            return Err(Error::Format(format!("truncated checkpoint: {rest} body bytes, need {body}")));
        }
        let params = r.arrays(&shapes)?;
        let sampler = SamplerParams::from_params(kind, side, d, k, params)?;

        let decoder = if r.remaining() == 0 {
            None
        } else {
            if r.remaining() < DECODER_HEADER_LEN {
                return Err(Error::Format("truncated decoder section".into()));
            }
            let dkind = DecoderKind::from_tag(r.u8()?)?;
            let width = r.u32()? as usize;
            if width == 0 {
                return Err(Error::Format("decoder width must be positive".into()));
            }
            let shapes = checked_decoder_shapes(dkind, side, width)?;
            let need = byte_len(&shapes)?;
            if r.remaining() != need {
                return Err(Error::Format(format!(
                    "decoder section holds {} bytes, need {need}",
                    r.remaining()
                )));
            }
            let params = r.arrays(&shapes)?;
            Some(Decoder::from_params(dkind, side, width, params)?)
        };
        if r.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Checkpoint { sampler, decoder })
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn save_atomic(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

fn push_arrays(out: &mut Vec<u8>, arrays: Vec<&Tensor>) {
    for t in arrays {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Total bytes of f64 arrays with the given shapes.
fn byte_len(shapes: &[Vec<usize>]) -> Result<usize> {
    shapes
        .iter()
        .try_fold(0usize, |acc, s| {
            let n = s.iter().try_fold(1usize, |a, &d| a.checked_mul(d))?;
            acc.checked_add(n.checked_mul(8)?)
        })
        .ok_or_else(|| Error::Format("checkpoint dimensions overflow".into()))
}

/// Decoder shapes after guarding the products that `param_shapes` forms unchecked.
fn checked_decoder_shapes(kind: DecoderKind, side: usize, width: usize) -> Result<Vec<Vec<usize>>> {
    let m = side.checked_mul(side);
    let fits = m.and_then(|m| m.checked_mul(width)).and_then(|x| x.checked_mul(8)).is_some()
        && width.checked_mul(width).and_then(|x| x.checked_mul(9 * 8)).is_some();
    if !fits {
        return Err(Error::Format("decoder dimensions overflow".into()));
    }
    Ok(Decoder::param_shapes(kind, side, width))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!("truncated checkpoint at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    /// Reads arrays whose total size the caller has already bounded.
    fn arrays(&mut self, shapes: &[Vec<usize>]) -> Result<Vec<Tensor>> {
        shapes
            .iter()
            .map(|shape| {
                let n: usize = shape.iter().product();
                let raw = self.take(n * 8)?;
                let data: Vec<f64> =
                    raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
                if data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Format("non-finite parameter in checkpoint".into()));
                }
                Tensor::new(shape.clone(), data)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_decoder;
    use crate::rng::seeded;
    use crate::samplers::init_sampler;

    #[test]
    fn round_trip_every_kind() {
        for kind in SamplerKind::ALL {
            let sampler = init_sampler(kind, 4, 3, 5, 1).unwrap();
            for dkind in [None, Some(DecoderKind::Mlp), Some(DecoderKind::ConvResnet)] {
                let decoder = dkind.map(|k| init_decoder(k, 4, 3, &mut seeded(2, 0)).unwrap());
                let ck = Checkpoint { sampler: sampler.clone(), decoder };
                assert_eq!(Checkpoint::decode(&ck.encode()).unwrap(), ck);
            }
        }
    }

    #[test]
    fn header_layout() {
        let ck = Checkpoint { sampler: init_sampler(SamplerKind::Concrete, 2, 0, 0, 0).unwrap(), decoder: None };
        let bytes = ck.encode();
        assert_eq!(&bytes[..4], b"MSKO");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(bytes[8], 3);
        assert_eq!(&bytes[9..13], &[2, 0, 0, 0]);
        assert_eq!(bytes.len(), HEADER_LEN + 4 * 8);
    }

    #[test]
    fn truncation_and_trailing_bytes_are_rejected() {
        let ck = Checkpoint {
            sampler: init_sampler(SamplerKind::Vanilla, 3, 2, 0, 0).unwrap(),
            decoder: Some(init_decoder(DecoderKind::Mlp, 3, 2, &mut seeded(0, 0)).unwrap()),
        };
        let bytes = ck.encode();
        for cut in [0, 3, HEADER_LEN, bytes.len() - 1] {
            assert!(matches!(Checkpoint::decode(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Checkpoint::decode(&extra), Err(Error::Format(_))));
    }

    #[test]
    fn huge_dimensions_fail_before_allocating() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.push(SamplerKind::Hypernet.tag());
        for v in [u32::MAX, u32::MAX - 1, u32::MAX] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::Format(_))));
    }
}
