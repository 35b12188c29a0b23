//! Seeded random streams.
//!
//! All randomness comes from ChaCha20, a counter-based generator: a
//! `(seed, stream)` pair fully determines the sequence, and distinct stream
//! ids give independent sequences from one user seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Tensor;

pub type StreamRng = ChaCha20Rng;

/// Stream ids used by training.
pub mod stream {
    pub const INIT: u64 = 0;
    pub const NOISE: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const DATA: u64 = 4;
    pub const DECODER: u64 = 5;
}

pub fn seeded(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.sample(StandardNormal))
}

/// Uniform draws strictly inside `(0, 1)`; boundary values are redrawn.
pub fn uniform_open_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| loop {
        let u: f64 = rng.random();
        if u > 0.0 && u < 1.0 {
            break u;
        }
    })
}

pub fn uniform_tensor(rng: &mut impl Rng, shape: &[usize], half_width: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-half_width..=half_width))
}
