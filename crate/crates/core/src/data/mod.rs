//! Datasets and artifact formats.

mod grf;
mod idx;
mod pgm;

pub use grf::{gen_gaussian_random_field, lag1_autocorrelation};
pub use idx::{
    encode_idx_f64, encode_idx_images, encode_idx_labels, load_idx, load_idx_f64, parse_idx_f64,
    parse_idx_images, parse_idx_labels, IdxImages, IDX_F64_MAGIC, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC,
};
pub use pgm::{encode_pgm, parse_pgm, read_pgm, write_pgm, PgmImage};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Stack of square images stored row-major, one after the other.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub side: usize,
    pub split: Split,
    /// Where the images came from, for logs and reports.
    pub provenance: String,
    images: Vec<f64>,
    pub labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(side: usize, split: Split, provenance: impl Into<String>, images: Vec<f64>) -> Result<Self> {
        let m = side * side;
        if side == 0 || images.is_empty() || images.len() % m != 0 {
            return Err(Error::dim("dataset", format!("{} values do not form {side}x{side} images", images.len())));
        }
        Ok(Dataset { side, split, provenance: provenance.into(), images, labels: None })
    }

    pub fn len(&self) -> usize {
        self.images.len() / self.pixels()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.side * self.side
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let m = self.pixels();
        &self.images[i * m..(i + 1) * m]
    }

    pub fn images(&self) -> &[f64] {
        &self.images
    }

    /// `[B, n, n]` tensor of the selected images.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.pixels());
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        Tensor::new(vec![indices.len(), self.side, self.side], data).expect("non-empty batch")
    }

    /// First `count` images (all of them if fewer).
    pub fn truncate(mut self, count: usize) -> Self {
        let keep = count.min(self.len()).max(1);
        self.images.truncate(keep * self.pixels());
        if let Some(l) = self.labels.as_mut() {
            l.truncate(keep);
        }
        self
    }

    /// Per-pixel mean image.
    pub fn mean_image(&self) -> Vec<f64> {
        let m = self.pixels();
        let mut mean = vec![0.0; m];
        for i in 0..self.len() {
            for (acc, v) in mean.iter_mut().zip(self.image(i)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= self.len() as f64);
        mean
    }

    /// Mean over pixels of the per-pixel variance: the MSE of the best
    /// constant predictor.
    pub fn mean_pixel_variance(&self) -> f64 {
        let mean = self.mean_image();
        let mut acc = 0.0;
        for i in 0..self.len() {
            acc += self.image(i).iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>();
        }
        acc / (self.len() * self.pixels()) as f64
    }
}

/// Disjoint train and test splits.
#[derive(Clone, Debug)]
pub struct DatasetPair {
    pub train: Dataset,
    pub test: Dataset,
}
