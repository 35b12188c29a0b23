use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;
use crate::rng::uniform_tensor;

/// Slope of every leaky-ReLU in the crate.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Affine layer `x W^T + b` with `W` stored as `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense { w: Tensor::zeros(&[fan_out, fan_in]), b: Tensor::zeros(&[fan_out]) }
    }

    /// Uniform weights on `[-a, a]` with `a = gain * sqrt(3 / fan_in)`, zero bias.
    pub fn uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize, gain: f64) -> Self {
        let a = gain * (3.0 / fan_in as f64).sqrt();
        Dense { w: uniform_tensor(rng, &[fan_out, fan_in], a), b: Tensor::zeros(&[fan_out]) }
    }

    pub fn fan_in(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn fan_out(&self) -> usize {
        self.w.shape()[0]
    }

    /// `x` is `[B, in]`; `vars` are this layer's `(w, b)` on the tape.
    pub fn forward(tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let xw = tape.matmul_t(x, vars[0])?;
        tape.add_bias(xw, vars[1])
    }
}

/// Gain keeping the second moment through a leaky-ReLU.
pub fn leaky_gain() -> f64 {
    (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt()
}

/// Two affine layers with a leaky-ReLU in between.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoLayer {
    pub hidden: Dense,
    pub out: Dense,
}

impl TwoLayer {
    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.hidden.w, &self.hidden.b, &self.out.w, &self.out.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.hidden.w, &mut self.hidden.b, &mut self.out.w, &mut self.out.b]
    }

    pub fn forward(tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let h = Dense::forward(tape, &vars[0..2], x)?;
        let h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        Dense::forward(tape, &vars[2..4], h)
    }

    /// Hidden activations only, for calibration.
    pub fn hidden_forward(tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let h = Dense::forward(tape, &vars[0..2], x)?;
        tape.leaky_relu(h, LEAKY_SLOPE)
    }
}
