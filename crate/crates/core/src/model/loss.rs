use crate::autodiff::{Tape, Var};
use crate::distributions::StretchConfig;
use crate::error::{Error, Result};
use crate::samplers::{sparsity_penalty, SamplerOutput};

use super::Decoder;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub recon: f64,
    pub sparsity: f64,
    pub total: f64,
    pub lambda_sparse: f64,
}

/// Tape handles of the three loss terms.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveVars {
    pub recon: Var,
    pub sparsity: Var,
    pub total: Var,
    pub lambda_sparse: f64,
}

impl ObjectiveVars {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            recon: tape.value(self.recon).item(),
            sparsity: tape.value(self.sparsity).item(),
            total: tape.value(self.total).item(),
            lambda_sparse: self.lambda_sparse,
        }
    }
}

/// Mean squared error of `dec(mask * x)` against `x`.
pub fn reconstruction_loss(tape: &mut Tape, mask: Var, x: Var, dec: &Decoder, dec_vars: &[Var]) -> Result<Var> {
    if tape.shape(mask) != tape.shape(x) {
        return Err(Error::dim(
            "objective",
            format!("mask {:?} vs images {:?}", tape.shape(mask), tape.shape(x)),
        ));
    }
    let x_obs = tape.mul(mask, x)?;
    let x_hat = dec.forward(tape, dec_vars, x_obs)?;
    let diff = tape.sub(x_hat, x)?;
    let sq = tape.square(diff)?;
    tape.mean(sq)
}

/// `recon + lambda_sparse * sparsity` on the stretched mask of `out`.
pub fn objective(
    tape: &mut Tape,
    out: &SamplerOutput,
    x: Var,
    dec: &Decoder,
    dec_vars: &[Var],
    lambda_sparse: f64,
    cfg: &StretchConfig,
) -> Result<ObjectiveVars> {
    if !(lambda_sparse >= 0.0 && lambda_sparse.is_finite()) {
        return Err(Error::Parameter(format!("lambda_sparse must be finite and non-negative, got {lambda_sparse}")));
    }
    let sparsity = sparsity_penalty(tape, out, cfg)?;
    let recon = reconstruction_loss(tape, out.stretched, x, dec, dec_vars)?;
    let weighted = tape.scale(sparsity, lambda_sparse)?;
    let total = tape.add(recon, weighted)?;
    Ok(ObjectiveVars { recon, sparsity, total, lambda_sparse })
}
