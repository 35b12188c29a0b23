use rand::Rng;

use super::{check_noise, image_shape, SamplerOutput, SparsitySource};
use crate::autodiff::{Tape, Tensor, Var};
use crate::distributions::{stretch, StretchConfig};
use crate::error::{Error, Result};
use crate::model::layers::{leaky_gain, Dense, TwoLayer};
use crate::rng::normal_tensor;

/// Default width of the latent representation `r = F_rep(z)`.
pub const DEFAULT_REPR_WIDTH: usize = 32;

const CALIBRATION_SAMPLES: usize = 2048;

/// Input-dependent linear sampler: `sigmoid_lambda(W_z z + b_z)` with
/// `(W_z, b_z)` produced from `z` by small networks.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    pub side: usize,
    pub latent_dim: usize,
    pub repr_width: usize,
    pub f_rep: TwoLayer,
    pub f_w: TwoLayer,
    pub f_b: TwoLayer,
}

impl HyperParams {
    /// Kaiming-uniform hidden layers; the `F_W` head is rescaled so that the
    /// pre-sigmoid activations have unit variance, the `F_b` head starts at 0.
    pub fn init(side: usize, latent_dim: usize, repr_width: usize, rng: &mut impl Rng) -> Result<Self> {
        let m = side * side;
        if latent_dim == 0 || latent_dim >= m {
            return Err(Error::Config(format!("latent dim {latent_dim} must lie in [1, {m})")));
        }
        if repr_width == 0 {
            return Err(Error::Config("representation width must be positive".into()));
        }
        let (d, k) = (latent_dim, repr_width);
        let g = leaky_gain();
        let f_rep = TwoLayer { hidden: Dense::uniform(rng, d, k, g), out: Dense::uniform(rng, k, k, 1.0) };
        let f_w = TwoLayer { hidden: Dense::uniform(rng, k, k, g), out: Dense::uniform(rng, k, m * d, 1.0) };
        let f_b = TwoLayer { hidden: Dense::uniform(rng, k, k, g), out: Dense::zeros(k, m) };
        let mut p = HyperParams { side, latent_dim, repr_width, f_rep, f_w, f_b };

        let z = normal_tensor(rng, &[CALIBRATION_SAMPLES, d]);
        let var = p.preactivation_variance(&z)?;
        if var > 0.0 && var.is_finite() {
            let s = var.sqrt().recip();
            for t in [&mut p.f_w.out.w, &mut p.f_w.out.b] {
                t.data_mut().iter_mut().for_each(|v| *v *= s);
            }
        }
        Ok(p)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut v = self.f_rep.params();
        v.extend(self.f_w.params());
        v.extend(self.f_b.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.f_rep.params_mut();
        v.extend(self.f_w.params_mut());
        v.extend(self.f_b.params_mut());
        v
    }

    fn pixels(&self) -> usize {
        self.side * self.side
    }

    /// Per-sample `(W_z [B, m, d], b_z [B, m])` for `z` of shape `[B, d]`.
    pub(crate) fn linear_map(&self, tape: &mut Tape, vars: &[Var], z: Var) -> Result<(Var, Var)> {
        let batch = tape.shape(z)[0];
        let r = TwoLayer::forward(tape, &vars[0..4], z)?;
        let wz = TwoLayer::forward(tape, &vars[4..8], r)?;
        let wz = tape.reshape(wz, &[batch, self.pixels(), self.latent_dim])?;
        let bz = TwoLayer::forward(tape, &vars[8..12], r)?;
        Ok((wz, bz))
    }

    fn preactivation_variance(&self, z: &Tensor) -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params().into_iter().map(|t| tape.leaf(t.clone())).collect();
        let zv = tape.leaf(z.clone());
        let (wz, bz) = self.linear_map(&mut tape, &vars, zv)?;
        let wzz = tape.batched_matvec(wz, zv)?;
        let pre = tape.add(wzz, bz)?;
        let data = tape.value(pre).data();
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        Ok(data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
    }

    pub(crate) fn forward(&self, tape: &mut Tape, vars: &[Var], noise: &Tensor, cfg: &StretchConfig) -> Result<SamplerOutput> {
        check_noise(noise, self.latent_dim, "latent z")?;
        let z = if noise.shape().len() == 1 {
            tape.leaf(noise.clone().reshape(&[1, self.latent_dim])?)
        } else {
            tape.leaf(noise.clone())
        };
        let (wz, bz) = self.linear_map(tape, vars, z)?;
        let wzz = tape.batched_matvec(wz, z)?;
        let pre = tape.add(wzz, bz)?;
        let soft = tape.sigmoid_temp(pre, cfg.lambda_temp)?;
        let soft = tape.reshape(soft, &image_shape(noise, self.side))?;
        let stretched = stretch(tape, soft, cfg)?;
        let std = tape.norm_last_axis(wz)?;
        Ok(SamplerOutput {
            soft,
            stretched,
            sparsity: Some(SparsitySource::Gaussian { mean: bz, std }),
            linear_map: Some((wz, bz)),
        })
    }
}
