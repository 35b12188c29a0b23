//! Gaussian random fields by spectral synthesis.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng::{normal_tensor, seeded, stream};

/// `count` periodic `n x n` fields with power spectrum `|k|^-slope`,
/// standardized to zero mean and unit variance over the whole dataset.
pub fn gen_gaussian_random_field(count: usize, n: usize, slope: f64, seed: u64, split: Split) -> Result<Dataset> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Config(format!("field side must be a power of two >= 2, got {n}")));
    }
    if count == 0 {
        return Err(Error::Config("field count must be positive".into()));
    }
    if !slope.is_finite() {
        return Err(Error::Config(format!("spectral slope must be finite, got {slope}")));
    }
    let m = n * n;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    // amplitude filter sqrt(|k|^-slope) on the integer frequency grid
    let freq = |i: usize| if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
    let filter: Vec<f64> = (0..m)
        .map(|idx| {
            let k = freq(idx / n).hypot(freq(idx % n));
            if k == 0.0 {
                0.0
            } else {
                k.powf(-slope / 2.0)
            }
        })
        .collect();

    let mut rng = seeded(seed, stream::DATA);
    let mut images = Vec::with_capacity(count * m);
    let mut buf = vec![Complex::new(0.0, 0.0); m];
    for _ in 0..count {
        let noise = normal_tensor(&mut rng, &[m]);
        for (b, &v) in buf.iter_mut().zip(noise.data()) {
            *b = Complex::new(v, 0.0);
        }
        fft2(&mut buf, n, fwd.as_ref());
        for (b, f) in buf.iter_mut().zip(&filter) {
            *b *= f;
        }
        fft2(&mut buf, n, inv.as_ref());
        images.extend(buf.iter().map(|c| c.re));
    }

    let len = images.len() as f64;
    let mean = images.iter().sum::<f64>() / len;
    let var = images.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len;
    let scale = if var > 0.0 { var.sqrt().recip() } else { 1.0 };
    images.iter_mut().for_each(|v| *v = (*v - mean) * scale);
    Dataset::new(n, split, format!("grf(n={n}, slope={slope}, seed={seed})"), images)
}

/// Row-then-column 1-D transforms, unnormalized.
fn fft2(buf: &mut [Complex<f64>], n: usize, fft: &dyn rustfft::Fft<f64>) {
    for row in buf.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = buf[r * n + c];
        }
        fft.process(&mut col);
        for r in 0..n {
            buf[r * n + c] = col[r];
        }
    }
}

/// Pooled horizontal and vertical lag-1 correlation over all images.
pub fn lag1_autocorrelation(ds: &Dataset) -> f64 {
    let n = ds.side;
    let all = ds.images();
    let len = all.len() as f64;
    let mean = all.iter().sum::<f64>() / len;
    let var = all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len;
    let (mut acc, mut pairs) = (0.0, 0usize);
    for i in 0..ds.len() {
        let img = ds.image(i);
        for r in 0..n {
            for c in 0..n {
                let v = img[r * n + c] - mean;
                if c + 1 < n {
                    acc += v * (img[r * n + c + 1] - mean);
                    pairs += 1;
                }
                if r + 1 < n {
                    acc += v * (img[(r + 1) * n + c] - mean);
                    pairs += 1;
                }
            }
        }
    }
    acc / pairs as f64 / var
}
