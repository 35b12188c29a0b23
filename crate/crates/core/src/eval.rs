//! Collapsing a trained distribution into deterministic masks, and
//! evaluating decoders under a fixed mask.

use rayon::prelude::*;

use crate::autodiff::{Tape, Tensor};
use crate::data::Dataset;
use crate::distributions::{collapse_prob, logistic_noise};
use crate::error::{Error, Result};
use crate::model::Decoder;
use crate::rng::{normal_tensor, seeded, stream, uniform_open_tensor};
use crate::samplers::{SamplerParams, VanillaParams};

pub const DEFAULT_MC_SAMPLES: usize = 1024;
const MC_CHUNK: usize = 256;
const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct CollapsedMask {
    pub side: usize,
    /// Zero-temperature selection probability per pixel, row-major.
    pub probs: Vec<f64>,
    /// Sum of `probs`.
    pub l0_estimate: f64,
    /// `(K, mask)` for K rounded down and up to a multiple of ten.
    pub masks: Vec<(usize, Vec<bool>)>,
}

/// Zero-temperature selection probabilities.
///
/// Factored Gaussian laws use the closed form `Phi(b / s)`; the
/// hypernetwork and concrete samplers average the limiting indicator over
/// `mc_samples` noise draws seeded by `seed`.
pub fn selection_probs(sampler: &SamplerParams, mc_samples: usize, seed: u64) -> Result<Vec<f64>> {
    if !sampler.is_finite() {
        return Err(Error::Contract("cannot collapse a sampler with non-finite parameters".into()));
    }
    if let Some(spec) = sampler.gaussian_spec() {
        return Ok(collapse_prob(&spec));
    }
    if mc_samples == 0 {
        return Err(Error::Config("Monte-Carlo collapse needs at least one sample".into()));
    }
    let m = sampler.pixels();
    let mut rng = seeded(seed, stream::EVAL);
    let mut hits = vec![0u64; m];
    let mut left = mc_samples;
    while left > 0 {
        let b = left.min(MC_CHUNK);
        left -= b;
        let pre = match sampler {
            SamplerParams::Hypernet(p) => {
                let mut tape = Tape::new();
                let vars = sampler.bind(&mut tape);
                let z = tape.leaf(normal_tensor(&mut rng, &[b, p.latent_dim]));
                let (wz, bz) = p.linear_map(&mut tape, &vars, z)?;
                let wzz = tape.batched_matvec(wz, z)?;
                let pre = tape.add(wzz, bz)?;
                tape.value(pre).clone()
            }
            SamplerParams::Concrete(p) => {
                let g = logistic_noise(&uniform_open_tensor(&mut rng, &[b, m]))?;
                let la = p.log_alpha.data();
                Tensor::from_fn(&[b, m], |i| g.data()[i] + la[i % m])
            }
            _ => unreachable!("factored laws handled above"),
        };
        for row in pre.data().chunks(m) {
            for (h, &v) in hits.iter_mut().zip(row) {
                *h += u64::from(v > 0.0);
            }
        }
    }
    Ok(hits.iter().map(|&h| h as f64 / mc_samples as f64).collect())
}

/// Indices of the `k` largest probabilities; ties go to the lower index.
pub fn top_k(probs: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > probs.len() {
        return Err(Error::Bounds(format!("cannot select {k} of {} pixels", probs.len())));
    }
    if probs.iter().any(|p| p.is_nan()) {
        return Err(Error::Domain("NaN selection probability".into()));
    }
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

pub fn top_k_mask(probs: &[f64], k: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; probs.len()];
    for i in top_k(probs, k)? {
        mask[i] = true;
    }
    Ok(mask)
}

/// Feature counts `10 floor(l0 / 10)` and `10 ceil(l0 / 10)`, capped at
/// `pixels` and deduplicated.
pub fn rounded_counts(l0: f64, pixels: usize) -> Vec<usize> {
    let lo = ((l0 / 10.0).floor() * 10.0).max(0.0) as usize;
    let hi = ((l0 / 10.0).ceil() * 10.0).max(0.0) as usize;
    let mut v = vec![lo.min(pixels), hi.min(pixels)];
    v.dedup();
    v
}

pub fn collapse_from_probs(side: usize, probs: Vec<f64>) -> Result<CollapsedMask> {
    if probs.len() != side * side {
        return Err(Error::dim("collapse", format!("{} probabilities for {side}x{side}", probs.len())));
    }
    let l0_estimate = probs.iter().sum();
    let masks = rounded_counts(l0_estimate, probs.len())
        .into_iter()
        .map(|k| Ok((k, top_k_mask(&probs, k)?)))
        .collect::<Result<_>>()?;
    Ok(CollapsedMask { side, probs, l0_estimate, masks })
}

pub fn collapse_distribution(sampler: &SamplerParams, mc_samples: usize, seed: u64) -> Result<CollapsedMask> {
    collapse_from_probs(sampler.side(), selection_probs(sampler, mc_samples, seed)?)
}

/// Sum with a running compensation term (Neumaier).
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean per-pixel squared error of `dec(mask * x)` over `data`.
///
/// Chunks are reconstructed in parallel and reduced in chunk order, so the
/// result does not depend on the thread count.
pub fn eval_fixed_mask(mask: &[f64], dec: &Decoder, data: &Dataset) -> Result<f64> {
    let m = data.pixels();
    if mask.len() != m || dec.side() != data.side {
        return Err(Error::dim(
            "eval_fixed_mask",
            format!("mask of {} pixels, decoder side {}, images {}x{}", mask.len(), dec.side(), data.side, data.side),
        ));
    }
    if let Some(v) = mask.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Domain(format!("mask value {v} is not binary")));
    }
    let chunks: Vec<Vec<usize>> = (0..data.len()).collect::<Vec<_>>().chunks(EVAL_CHUNK).map(<[usize]>::to_vec).collect();
    let partial: Vec<f64> = chunks
        .par_iter()
        .map(|idx| -> Result<f64> {
            let x = data.batch(idx);
            let masked = Tensor::new(x.shape().to_vec(), x.data().iter().enumerate().map(|(i, v)| v * mask[i % m]).collect())?;
            let y = dec.reconstruct(&masked)?;
            Ok(compensated_sum(y.data().iter().zip(x.data()).map(|(a, b)| (a - b) * (a - b))))
        })
        .collect::<Result<_>>()?;
    Ok(compensated_sum(partial) / (data.len() * m) as f64)
}

pub fn mask_to_f64(mask: &[bool]) -> Vec<f64> {
    mask.iter().map(|&b| f64::from(u8::from(b))).collect()
}

/// Window `[start, start + len)` of the pre-sigmoid covariance `W W^T`,
/// row-major `len x len`, exactly symmetric.
pub fn export_covariance(p: &VanillaParams, start: usize, len: usize) -> Result<Vec<f64>> {
    let m = p.side * p.side;
    let end = start.checked_add(len).filter(|&e| len > 0 && e <= m);
    if end.is_none() {
        return Err(Error::Bounds(format!("window [{start}, {start}+{len}) outside 0..{m}")));
    }
    let d = p.latent_dim();
    let w = p.w.data();
    let row = |i: usize| &w[(start + i) * d..(start + i + 1) * d];
    let mut out = vec![0.0; len * len];
    for i in 0..len {
        for j in i..len {
            let v: f64 = row(i).iter().zip(row(j)).map(|(a, b)| a * b).sum();
            out[i * len + j] = v;
            out[j * len + i] = v;
        }
    }
    Ok(out)
}

/// Frobenius norm of the off-diagonal part of a square row-major matrix.
pub fn off_diagonal_frobenius(mat: &[f64], len: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..len {
        for j in 0..len {
            if i != j {
                acc += mat[i * len + j] * mat[i * len + j];
            }
        }
    }
    acc.sqrt()
}
