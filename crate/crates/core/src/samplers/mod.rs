//! Learnable mask distributions.
//!
//! Four parameterizations share one interface: draw noise, push it through
//! the sampler on a tape to get a soft mask in `(0, 1)` and its stretched
//! counterpart in `[0, 1]`, and expose the law needed for the expected-L0
//! penalty.

mod concrete;
mod hypernet;
mod independent;
mod vanilla;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use concrete::ConcreteParams;
pub use hypernet::{HyperParams, DEFAULT_REPR_WIDTH};
pub use independent::IndependentParams;
pub use vanilla::VanillaParams;

use crate::autodiff::{Tape, Tensor, Var};
use crate::distributions::{
    concrete_expected_l0, concrete_expected_l0_on_tape, expected_l0, expected_l0_on_tape, GaussianSpec,
    StretchConfig,
};
use crate::error::{Error, Result};
use crate::rng::{normal_tensor, seeded, stream, uniform_open_tensor};

/// Default latent dimension of the correlated samplers.
pub const DEFAULT_LATENT_DIM: usize = 16;

/// Default logitNormal temperature.
pub const DEFAULT_TEMPERATURE: f64 = 0.3;

/// Default temperature of the concrete baseline.
pub const CONCRETE_TEMPERATURE: f64 = 2.0 / 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Vanilla,
    Hypernet,
    Independent,
    Concrete,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 4] =
        [SamplerKind::Vanilla, SamplerKind::Hypernet, SamplerKind::Independent, SamplerKind::Concrete];

    pub fn tag(self) -> u8 {
        match self {
            SamplerKind::Vanilla => 0,
            SamplerKind::Hypernet => 1,
            SamplerKind::Independent => 2,
            SamplerKind::Concrete => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == tag)
            .ok_or_else(|| Error::Format(format!("unknown sampler tag {tag}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Vanilla => "vanilla",
            SamplerKind::Hypernet => "hypernet",
            SamplerKind::Independent => "independent",
            SamplerKind::Concrete => "concrete",
        }
    }

    pub fn default_temperature(self) -> f64 {
        match self {
            SamplerKind::Concrete => CONCRETE_TEMPERATURE,
            _ => DEFAULT_TEMPERATURE,
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sampler kind {s:?}")))
    }
}

/// Law of the stretched mask used by the sparsity penalty.
#[derive(Clone, Copy, Debug)]
pub enum SparsitySource {
    /// Pre-sigmoid Gaussian with per-coordinate mean and standard deviation.
    Gaussian { mean: Var, std: Var },
    Concrete { log_alpha: Var },
}

/// Tape handles produced by one sampler forward pass.
#[derive(Clone, Copy, Debug)]
pub struct SamplerOutput {
    /// Relaxed mask, `[n, n]` or `[B, n, n]`.
    pub soft: Var,
    /// Stretched mask with atoms at 0 and 1, same shape as `soft`.
    pub stretched: Var,
    pub sparsity: Option<SparsitySource>,
    /// Per-sample `(W_z [B, m, d], b_z [B, m])` of the hypernetwork sampler.
    pub linear_map: Option<(Var, Var)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SamplerParams {
    Vanilla(VanillaParams),
    Hypernet(HyperParams),
    Independent(IndependentParams),
    Concrete(ConcreteParams),
}

impl SamplerParams {
    pub fn kind(&self) -> SamplerKind {
        match self {
            SamplerParams::Vanilla(_) => SamplerKind::Vanilla,
            SamplerParams::Hypernet(_) => SamplerKind::Hypernet,
            SamplerParams::Independent(_) => SamplerKind::Independent,
            SamplerParams::Concrete(_) => SamplerKind::Concrete,
        }
    }

    /// Image side length.
    pub fn side(&self) -> usize {
        match self {
            SamplerParams::Vanilla(p) => p.side,
            SamplerParams::Hypernet(p) => p.side,
            SamplerParams::Independent(p) => p.side,
            SamplerParams::Concrete(p) => p.side,
        }
    }

    pub fn pixels(&self) -> usize {
        self.side() * self.side()
    }

    /// Latent dimension (0 for the factored samplers).
    pub fn latent_dim(&self) -> usize {
        match self {
            SamplerParams::Vanilla(p) => p.latent_dim(),
            SamplerParams::Hypernet(p) => p.latent_dim,
            _ => 0,
        }
    }

    /// Representation width of the hypernetwork (0 otherwise).
    pub fn repr_width(&self) -> usize {
        match self {
            SamplerParams::Hypernet(p) => p.repr_width,
            _ => 0,
        }
    }

    /// Parameter shapes in declaration order, or a format error when the
    /// header fields are inconsistent or overflow.
    pub fn param_shapes(kind: SamplerKind, side: usize, latent_dim: usize, repr_width: usize) -> Result<Vec<Vec<usize>>> {
        let bad = |msg: String| Error::Format(msg);
        let m = side.checked_mul(side).filter(|&m| m > 0).ok_or_else(|| bad(format!("invalid side {side}")))?;
        let (d, k) = (latent_dim, repr_width);
        let needs = |want_d: bool, want_k: bool| -> Result<()> {
            if want_d != (d > 0) || want_k != (k > 0) {
                return Err(bad(format!("{kind} sampler with latent dim {d} and width {k}")));
            }
            Ok(())
        };
        Ok(match kind {
            SamplerKind::Vanilla => {
                needs(true, false)?;
                vec![vec![m, d], vec![m]]
            }
            SamplerKind::Hypernet => {
                needs(true, true)?;
                let md = m.checked_mul(d).ok_or_else(|| bad("hypernetwork output overflows".into()))?;
                vec![
                    vec![k, d],
                    vec![k],
                    vec![k, k],
                    vec![k],
                    vec![k, k],
                    vec![k],
                    vec![md, k],
                    vec![md],
                    vec![k, k],
                    vec![k],
                    vec![m, k],
                    vec![m],
                ]
            }
            SamplerKind::Independent => {
                needs(false, false)?;
                vec![vec![m], vec![m]]
            }
            SamplerKind::Concrete => {
                needs(false, false)?;
                vec![vec![m]]
            }
        })
    }

    /// Rebuilds a sampler from parameters in declaration order.
    pub fn from_params(
        kind: SamplerKind,
        side: usize,
        latent_dim: usize,
        repr_width: usize,
        params: Vec<Tensor>,
    ) -> Result<Self> {
        let shapes = Self::param_shapes(kind, side, latent_dim, repr_width)?;
        if params.len() != shapes.len() || params.iter().zip(&shapes).any(|(p, s)| p.shape() != s.as_slice()) {
            return Err(Error::dim("sampler", format!("parameters do not match a {kind} sampler")));
        }
        let mut it = params.into_iter();
        let mut next = || it.next().expect("length checked");
        Ok(match kind {
            SamplerKind::Vanilla => SamplerParams::Vanilla(VanillaParams::from_parts(side, next(), next())?),
            SamplerKind::Hypernet => {
                let mut two = || {
                    use crate::model::layers::{Dense, TwoLayer};
                    let hidden = Dense { w: next(), b: next() };
                    let out = Dense { w: next(), b: next() };
                    TwoLayer { hidden, out }
                };
                let (f_rep, f_w, f_b) = (two(), two(), two());
                SamplerParams::Hypernet(HyperParams { side, latent_dim, repr_width, f_rep, f_w, f_b })
            }
            SamplerKind::Independent => {
                SamplerParams::Independent(IndependentParams { side, mu: next(), sigma_raw: next() })
            }
            SamplerKind::Concrete => SamplerParams::Concrete(ConcreteParams { side, log_alpha: next() }),
        })
    }

    /// Parameters in declaration order.
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            SamplerParams::Vanilla(p) => vec![&p.w, &p.b],
            SamplerParams::Hypernet(p) => p.params(),
            SamplerParams::Independent(p) => vec![&p.mu, &p.sigma_raw],
            SamplerParams::Concrete(p) => vec![&p.log_alpha],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            SamplerParams::Vanilla(p) => vec![&mut p.w, &mut p.b],
            SamplerParams::Hypernet(p) => p.params_mut(),
            SamplerParams::Independent(p) => vec![&mut p.mu, &mut p.sigma_raw],
            SamplerParams::Concrete(p) => vec![&mut p.log_alpha],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|t| t.is_finite())
    }

    /// Registers every parameter as a tape leaf, in declaration order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Noise shape for a batch: `z` for the logitNormal samplers, `u` for concrete.
    pub fn noise_shape(&self, batch: usize) -> Vec<usize> {
        match self {
            SamplerParams::Vanilla(_) | SamplerParams::Hypernet(_) => vec![batch, self.latent_dim()],
            _ => vec![batch, self.pixels()],
        }
    }

    pub fn draw_noise(&self, rng: &mut impl Rng, batch: usize) -> Tensor {
        let shape = self.noise_shape(batch);
        match self {
            SamplerParams::Concrete(_) => uniform_open_tensor(rng, &shape),
            _ => normal_tensor(rng, &shape),
        }
    }

    /// Runs the sampler on bound parameters `vars` (see [`Self::bind`]).
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], noise: &Tensor, cfg: &StretchConfig) -> Result<SamplerOutput> {
        match self {
            SamplerParams::Vanilla(p) => p.forward(tape, vars, noise, cfg),
            SamplerParams::Hypernet(p) => p.forward(tape, vars, noise, cfg),
            SamplerParams::Independent(p) => p.forward(tape, vars, noise, cfg),
            SamplerParams::Concrete(p) => p.forward(tape, vars, noise, cfg),
        }
    }

    /// Analytic pre-sigmoid law for the samplers that have a fixed one.
    pub fn gaussian_spec(&self) -> Option<GaussianSpec> {
        match self {
            SamplerParams::Vanilla(p) => Some(p.gaussian_spec()),
            SamplerParams::Independent(p) => Some(p.gaussian_spec()),
            _ => None,
        }
    }

    /// Normalized expected L0 of the current distribution, evaluated outside
    /// the tape. The hypernetwork estimate averages the per-sample closed
    /// form over `mc_samples` latent draws from `rng`.
    pub fn expected_l0(&self, cfg: &StretchConfig, rng: &mut impl Rng, mc_samples: usize) -> Result<f64> {
        match self {
            SamplerParams::Vanilla(_) | SamplerParams::Independent(_) => {
                expected_l0(&self.gaussian_spec().expect("factored law"), cfg, true)
            }
            SamplerParams::Concrete(p) => Ok(concrete_expected_l0(p.log_alpha.data(), cfg, true)),
            SamplerParams::Hypernet(p) => {
                let mut tape = Tape::new();
                let vars = self.bind(&mut tape);
                let z = normal_tensor(rng, &[mc_samples.max(1), p.latent_dim]);
                let out = p.forward(&mut tape, &vars, &z, cfg)?;
                let l0 = sparsity_penalty(&mut tape, &out, cfg)?;
                Ok(tape.value(l0).item())
            }
        }
    }
}

/// Normalized expected L0 of the stretched mask on the tape.
pub fn sparsity_penalty(tape: &mut Tape, out: &SamplerOutput, cfg: &StretchConfig) -> Result<Var> {
    match out.sparsity {
        Some(SparsitySource::Gaussian { mean, std }) => expected_l0_on_tape(tape, mean, std, cfg),
        Some(SparsitySource::Concrete { log_alpha }) => concrete_expected_l0_on_tape(tape, log_alpha, cfg),
        None => Err(Error::Contract("sampler output carries no law for the sparsity penalty".into())),
    }
}

/// Initial sampler parameters.
///
/// Every kind starts symmetric around 1/2: vanilla draws `W` uniformly on
/// `[-a, a]` with `a = sqrt(3 / d)` so each pre-sigmoid coordinate has unit
/// variance, `b = 0`; the hypernetwork output layer is scaled to the same
/// unit variance; independent uses `mu = 0, sigma = 1`; concrete `log alpha = 0`.
pub fn init_sampler(kind: SamplerKind, side: usize, latent_dim: usize, repr_width: usize, seed: u64) -> Result<SamplerParams> {
    if side == 0 {
        return Err(Error::Config("image side must be positive".into()));
    }
    let mut rng = seeded(seed, stream::INIT);
    Ok(match kind {
        SamplerKind::Vanilla => SamplerParams::Vanilla(VanillaParams::init(side, latent_dim, &mut rng)?),
        SamplerKind::Hypernet => {
            SamplerParams::Hypernet(HyperParams::init(side, latent_dim, repr_width, &mut rng)?)
        }
        SamplerKind::Independent => SamplerParams::Independent(IndependentParams::init(side)),
        SamplerKind::Concrete => SamplerParams::Concrete(ConcreteParams::init(side)),
    })
}

/// Shapes the relaxed mask like the image batch implied by `noise`.
pub(crate) fn image_shape(noise: &Tensor, side: usize) -> Vec<usize> {
    if noise.shape().len() == 1 {
        vec![side, side]
    } else {
        vec![noise.shape()[0], side, side]
    }
}

pub(crate) fn check_noise(noise: &Tensor, width: usize, what: &str) -> Result<()> {
    let ok = match noise.shape() {
        [w] => *w == width,
        [_, w] => *w == width,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::dim("sampler", format!("{what} must be [{width}] or [B, {width}], got {:?}", noise.shape())))
    }
}
