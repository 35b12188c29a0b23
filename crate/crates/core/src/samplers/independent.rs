use super::{check_noise, image_shape, SamplerOutput, SparsitySource};
use crate::autodiff::{Tape, Tensor, Var};
use crate::distributions::{independent_preactivation, stretch, GaussianSpec, StretchConfig};
use crate::error::Result;

/// Factored logitNormal sampler with `sigma = softplus(sigma_raw)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndependentParams {
    pub side: usize,
    pub mu: Tensor,
    pub sigma_raw: Tensor,
}

impl IndependentParams {
    /// `mu = 0`, `sigma = 1`.
    pub fn init(side: usize) -> Self {
        let m = side * side;
        // softplus(ln(e - 1)) = 1
        let raw = (std::f64::consts::E - 1.0).ln();
        IndependentParams { side, mu: Tensor::zeros(&[m]), sigma_raw: Tensor::full(&[m], raw) }
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.sigma_raw.data().iter().map(|&r| softplus(r)).collect()
    }

    pub fn gaussian_spec(&self) -> GaussianSpec {
        GaussianSpec { mu: self.mu.data().to_vec(), row_norm: self.sigma() }
    }

    pub(crate) fn forward(&self, tape: &mut Tape, vars: &[Var], noise: &Tensor, cfg: &StretchConfig) -> Result<SamplerOutput> {
        check_noise(noise, self.side * self.side, "noise")?;
        let (mu, raw) = (vars[0], vars[1]);
        let sigma = tape.softplus(raw)?;
        let z = tape.leaf(noise.clone());
        let pre = independent_preactivation(tape, mu, sigma, z)?;
        let soft = tape.sigmoid_temp(pre, cfg.lambda_temp)?;
        let soft = tape.reshape(soft, &image_shape(noise, self.side))?;
        let stretched = stretch(tape, soft, cfg)?;
        Ok(SamplerOutput {
            soft,
            stretched,
            sparsity: Some(SparsitySource::Gaussian { mean: mu, std: sigma }),
            linear_map: None,
        })
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}
