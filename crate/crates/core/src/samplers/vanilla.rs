use rand::Rng;

use super::{check_noise, image_shape, SamplerOutput, SparsitySource};
use crate::autodiff::{Tape, Tensor, Var};
use crate::distributions::{correlated_preactivation, stretch, GaussianSpec, StretchConfig};
use crate::error::{Error, Result};
use crate::rng::uniform_tensor;

/// Global linear logitNormal sampler: `sigmoid_lambda(W z + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VanillaParams {
    pub side: usize,
    /// `[n^2, d]`
    pub w: Tensor,
    /// `[n^2]`
    pub b: Tensor,
}

impl VanillaParams {
    pub fn init(side: usize, latent_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let m = side * side;
        if latent_dim == 0 || latent_dim >= m {
            return Err(Error::Config(format!("latent dim {latent_dim} must lie in [1, {m})")));
        }
        let a = (3.0 / latent_dim as f64).sqrt();
        Ok(VanillaParams { side, w: uniform_tensor(rng, &[m, latent_dim], a), b: Tensor::zeros(&[m]) })
    }

    pub fn from_parts(side: usize, w: Tensor, b: Tensor) -> Result<Self> {
        let m = side * side;
        if w.shape().len() != 2 || w.shape()[0] != m || b.shape() != [m] {
            return Err(Error::dim("vanilla", format!("w {:?}, b {:?} for side {side}", w.shape(), b.shape())));
        }
        Ok(VanillaParams { side, w, b })
    }

    pub fn latent_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn gaussian_spec(&self) -> GaussianSpec {
        GaussianSpec::from_linear(&self.w, &self.b).expect("shapes checked at construction")
    }

    pub(crate) fn forward(&self, tape: &mut Tape, vars: &[Var], noise: &Tensor, cfg: &StretchConfig) -> Result<SamplerOutput> {
        check_noise(noise, self.latent_dim(), "latent z")?;
        let (w, b) = (vars[0], vars[1]);
        let z = tape.leaf(noise.clone());
        let pre = correlated_preactivation(tape, w, b, z)?;
        let soft = tape.sigmoid_temp(pre, cfg.lambda_temp)?;
        let soft = tape.reshape(soft, &image_shape(noise, self.side))?;
        let stretched = stretch(tape, soft, cfg)?;
        let std = tape.norm_last_axis(w)?;
        Ok(SamplerOutput {
            soft,
            stretched,
            sparsity: Some(SparsitySource::Gaussian { mean: b, std }),
            linear_map: None,
        })
    }
}
