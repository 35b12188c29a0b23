use super::{check_noise, image_shape, SamplerOutput, SparsitySource};
use crate::autodiff::{Tape, Tensor, Var};
use crate::distributions::{sample_concrete, stretch, StretchConfig};
use crate::error::Result;

/// Factored binary-concrete baseline, one location parameter per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcreteParams {
    pub side: usize,
    pub log_alpha: Tensor,
}

impl ConcreteParams {
    pub fn init(side: usize) -> Self {
        ConcreteParams { side, log_alpha: Tensor::zeros(&[side * side]) }
    }

    pub(crate) fn forward(&self, tape: &mut Tape, vars: &[Var], noise: &Tensor, cfg: &StretchConfig) -> Result<SamplerOutput> {
        check_noise(noise, self.side * self.side, "uniform noise")?;
        let log_alpha = vars[0];
        let soft = sample_concrete(tape, log_alpha, cfg.lambda_temp, noise)?;
        let soft = tape.reshape(soft, &image_shape(noise, self.side))?;
        let stretched = stretch(tape, soft, cfg)?;
        Ok(SamplerOutput { soft, stretched, sparsity: Some(SparsitySource::Concrete { log_alpha }), linear_map: None })
    }
}
