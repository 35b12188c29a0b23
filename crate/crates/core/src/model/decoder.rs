use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{leaky_gain, Dense, LEAKY_SLOPE};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::uniform_tensor;

pub const DEFAULT_MLP_WIDTH: usize = 256;
pub const DEFAULT_CONV_FILTERS: usize = 16;
const RES_BLOCKS: usize = 2;
const KERNEL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Mlp,
    ConvResnet,
}

impl DecoderKind {
    pub fn tag(self) -> u8 {
        match self {
            DecoderKind::Mlp => 0,
            DecoderKind::ConvResnet => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(DecoderKind::Mlp),
            1 => Ok(DecoderKind::ConvResnet),
            t => Err(Error::Format(format!("unknown decoder tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Mlp => "mlp",
            DecoderKind::ConvResnet => "conv_resnet",
        }
    }

    pub fn default_width(self) -> usize {
        match self {
            DecoderKind::Mlp => DEFAULT_MLP_WIDTH,
            DecoderKind::ConvResnet => DEFAULT_CONV_FILTERS,
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(DecoderKind::Mlp),
            "conv_resnet" => Ok(DecoderKind::ConvResnet),
            _ => Err(Error::Config(format!("unknown decoder kind {s:?}"))),
        }
    }
}

/// Fully connected decoder: two hidden layers of width `h`, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub side: usize,
    pub layers: [Dense; 3],
}

/// Small residual convolutional decoder with same-padding 3x3 kernels.
///
/// Layout: input conv to `filters` channels, leaky-ReLU, then residual
/// blocks `h + conv_b(leaky(conv_a(h)))`, then an output conv to one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvResnet {
    pub side: usize,
    /// `(kernel [c_out, c_in, 3, 3], bias [c_out])` in forward order.
    pub convs: Vec<(Tensor, Tensor)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decoder {
    Mlp(Mlp),
    ConvResnet(ConvResnet),
}

pub fn init_decoder(kind: DecoderKind, side: usize, width: usize, rng: &mut impl Rng) -> Result<Decoder> {
    if side == 0 || width == 0 {
        return Err(Error::Config(format!("decoder needs positive side and width, got {side} and {width}")));
    }
    let m = side * side;
    let g = leaky_gain();
    Ok(match kind {
        DecoderKind::Mlp => Decoder::Mlp(Mlp {
            side,
            layers: [Dense::uniform(rng, m, width, g), Dense::uniform(rng, width, width, g), Dense::uniform(rng, width, m, 1.0)],
        }),
        DecoderKind::ConvResnet => {
            let mut convs = Vec::with_capacity(2 + 2 * RES_BLOCKS);
            let conv = |rng: &mut _, c_in: usize, c_out: usize, gain: f64| {
                let fan_in = c_in * KERNEL * KERNEL;
                let a = gain * (3.0 / fan_in as f64).sqrt();
                (uniform_tensor(rng, &[c_out, c_in, KERNEL, KERNEL], a), Tensor::zeros(&[c_out]))
            };
            convs.push(conv(rng, 1, width, g));
            for _ in 0..2 * RES_BLOCKS {
                convs.push(conv(rng, width, width, g));
            }
            convs.push(conv(rng, width, 1, 1.0));
            Decoder::ConvResnet(ConvResnet { side, convs })
        }
    })
}

impl Decoder {
    pub fn kind(&self) -> DecoderKind {
        match self {
            Decoder::Mlp(_) => DecoderKind::Mlp,
            Decoder::ConvResnet(_) => DecoderKind::ConvResnet,
        }
    }

    pub fn side(&self) -> usize {
        match self {
            Decoder::Mlp(d) => d.side,
            Decoder::ConvResnet(d) => d.side,
        }
    }

    /// Hidden width for the MLP, filter count for the convolutional decoder.
    pub fn width(&self) -> usize {
        match self {
            Decoder::Mlp(d) => d.layers[0].fan_out(),
            Decoder::ConvResnet(d) => d.convs[0].0.shape()[0],
        }
    }

    /// Parameter shapes in declaration order for a given kind and size.
    pub fn param_shapes(kind: DecoderKind, side: usize, width: usize) -> Vec<Vec<usize>> {
        let m = side * side;
        match kind {
            DecoderKind::Mlp => vec![
                vec![width, m],
                vec![width],
                vec![width, width],
                vec![width],
                vec![m, width],
                vec![m],
            ],
            DecoderKind::ConvResnet => {
                let mut v = vec![vec![width, 1, KERNEL, KERNEL], vec![width]];
                for _ in 0..2 * RES_BLOCKS {
                    v.push(vec![width, width, KERNEL, KERNEL]);
                    v.push(vec![width]);
                }
                v.push(vec![1, width, KERNEL, KERNEL]);
                v.push(vec![1]);
                v
            }
        }
    }

    /// Rebuilds a decoder from parameters in declaration order.
    pub fn from_params(kind: DecoderKind, side: usize, width: usize, params: Vec<Tensor>) -> Result<Self> {
        let shapes = Self::param_shapes(kind, side, width);
        if params.len() != shapes.len() || params.iter().zip(&shapes).any(|(p, s)| p.shape() != s.as_slice()) {
            return Err(Error::dim("decoder", format!("parameters do not match a {kind} decoder of width {width}")));
        }
        let mut it = params.into_iter();
        let mut next = || it.next().expect("length checked");
        Ok(match kind {
            DecoderKind::Mlp => {
                let mut dense = || Dense { w: next(), b: next() };
                let layers = [dense(), dense(), dense()];
                Decoder::Mlp(Mlp { side, layers })
            }
            DecoderKind::ConvResnet => {
                let convs = (0..shapes.len() / 2).map(|_| (next(), next())).collect();
                Decoder::ConvResnet(ConvResnet { side, convs })
            }
        })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Decoder::Mlp(d) => d.layers.iter().flat_map(|l| [&l.w, &l.b]).collect(),
            Decoder::ConvResnet(d) => d.convs.iter().flat_map(|(k, b)| [k, b]).collect(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Decoder::Mlp(d) => d.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect(),
            Decoder::ConvResnet(d) => d.convs.iter_mut().flat_map(|(k, b)| [k, b]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|t| t.is_finite())
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Reconstructs `x_obs` of shape `[n, n]` or `[B, n, n]`; output has the same shape.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x_obs: Var) -> Result<Var> {
        let n = self.side();
        let shape = tape.shape(x_obs).to_vec();
        let batch = match shape[..] {
            [h, w] if h == n && w == n => 1,
            [b, h, w] if h == n && w == n => b,
            _ => return Err(Error::dim("decoder", format!("expected [{n}, {n}] or [B, {n}, {n}], got {shape:?}"))),
        };
        let out = match self {
            Decoder::Mlp(_) => {
                let x = tape.reshape(x_obs, &[batch, n * n])?;
                let h = Dense::forward(tape, &vars[0..2], x)?;
                let h = tape.leaky_relu(h, LEAKY_SLOPE)?;
                let h = Dense::forward(tape, &vars[2..4], h)?;
                let h = tape.leaky_relu(h, LEAKY_SLOPE)?;
                Dense::forward(tape, &vars[4..6], h)?
            }
            Decoder::ConvResnet(_) => {
                let conv = |tape: &mut Tape, x: Var, i: usize| -> Result<Var> {
                    let y = tape.conv2d(x, vars[2 * i])?;
                    tape.add_channel_bias(y, vars[2 * i + 1])
                };
                let x = tape.reshape(x_obs, &[batch, 1, n, n])?;
                let h = conv(tape, x, 0)?;
                let mut h = tape.leaky_relu(h, LEAKY_SLOPE)?;
                for block in 0..RES_BLOCKS {
                    let a = conv(tape, h, 1 + 2 * block)?;
                    let a = tape.leaky_relu(a, LEAKY_SLOPE)?;
                    let r = conv(tape, a, 2 + 2 * block)?;
                    h = tape.add(h, r)?;
                }
                conv(tape, h, 1 + 2 * RES_BLOCKS)?
            }
        };
        tape.reshape(out, &shape)
    }

    /// Forward pass on plain tensors, without keeping a tape around.
    pub fn reconstruct(&self, x_obs: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let x = tape.leaf(x_obs.clone());
        let y = self.forward(&mut tape, &vars, x)?;
        Ok(tape.value(y).clone())
    }
}
