//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value and the ids of
//! its inputs. Since inputs always exist before the node that consumes
//! them, the tape is topologically ordered by construction and a single
//! reverse sweep from the loss visits each node once.

use super::kernels::{self, ConvGeom, MatRef};
use super::tensor::Tensor;
use crate::distributions::{std_normal_cdf, std_normal_pdf};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `x` viewed as `[outer, len(bias), inner]` plus `bias` on the middle axis.
    AddBroadcast { x: Var, bias: Var, inner: usize },
    Affine { a: Var, scale: f64 },
    SigmoidTemp { a: Var, lambda: f64 },
    Clamp01(Var),
    LeakyRelu { a: Var, slope: f64 },
    Softplus(Var),
    Square(Var),
    NormLastAxis(Var),
    GaussianExceed { mean: Var, std: Var, threshold: f64 },
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Conv2d { x: Var, k: Var, geom: ConvGeom },
    BatchedMatVec { w: Var, z: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded computation graph for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Temperature sigmoid `1 / (1 + exp(-x / lambda))`.
pub fn sigmoid_temp(x: f64, lambda: f64) -> f64 {
    stable_sigmoid(x / lambda)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

/// `P(N(mean, std^2) > threshold)`; a zero `std` is a point mass at `mean`.
pub(crate) fn gaussian_exceed_value(mean: f64, std: f64, threshold: f64) -> f64 {
    if std > 0.0 {
        std_normal_cdf((mean - threshold) / std)
    } else if mean > threshold {
        1.0
    } else {
        0.0
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut [f64] {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Registers an input (parameter or data) on the tape.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let src = &self.nodes[a.0].value;
        let out = Tensor::new(src.shape().to_vec(), src.data().iter().map(|&x| f(x)).collect())?;
        self.push(name, out, op)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn matrix_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::dim(op, format!("expected a matrix, got {s:?}"))),
        }
    }

    /// Matrix product `a[m x k] * b[k x p]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// Product with the second operand transposed: `a[m x k] * b[p x k]^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (br, bc) = self.matrix_dims("matmul", b)?;
        let (bk, p) = if trans_b { (bc, br) } else { (br, bc) };
        if k != bk {
            return Err(Error::dim(
                "matmul",
                format!("inner dimensions {k} and {bk} differ"),
            ));
        }
        let mut out = vec![0.0; m * p];
        let bm = if trans_b {
            MatRef::t(self.value(b).data(), br, bc)
        } else {
            MatRef::new(self.value(b).data(), br, bc)
        };
        kernels::gemm(MatRef::new(self.value(a).data(), m, k), bm, 0.0, &mut out);
        self.push("matmul", Tensor::new(vec![m, p], out)?, Op::MatMul { a, b, trans_b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push(name, out, op)
    }

    /// Adds `bias` along the trailing axis of `x` (row-vector broadcast).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.add_broadcast(x, bias, 1)
    }

    /// Adds a per-channel bias to a `[.., C, H, W]` tensor.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let shape = self.shape(x);
        if shape.len() < 3 {
            return Err(Error::dim("add_channel_bias", format!("expected [.., C, H, W], got {shape:?}")));
        }
        let inner = shape[shape.len() - 2] * shape[shape.len() - 1];
        let c = shape[shape.len() - 3];
        if self.value(bias).len() != c {
            return Err(Error::dim("add_channel_bias", format!("{c} channels, bias of {}", self.value(bias).len())));
        }
        self.add_broadcast(x, bias, inner)
    }

    fn add_broadcast(&mut self, x: Var, bias: Var, inner: usize) -> Result<Var> {
        let xv = self.value(x);
        let bv = self.value(bias);
        let c = bv.len();
        if inner == 0 || xv.len() % (c * inner) != 0 || (inner == 1 && xv.shape().last() != Some(&c)) {
            return Err(Error::dim(
                "add_bias",
                format!("cannot broadcast {:?} onto {:?}", bv.shape(), xv.shape()),
            ));
        }
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv.data()[(i / inner) % c])
            .collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("add_bias", out, Op::AddBroadcast { x, bias, inner })
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        self.unary("affine", a, |x| scale * x + shift, Op::Affine { a, scale })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.affine(a, c, 0.0)
    }

    /// Elementwise `1 / (1 + exp(-x / lambda))`.
    pub fn sigmoid_temp(&mut self, a: Var, lambda: f64) -> Result<Var> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Parameter(format!("sigmoid temperature must be positive, got {lambda}")));
        }
        self.unary("sigmoid_temp", a, |x| sigmoid_temp(x, lambda), Op::SigmoidTemp { a, lambda })
    }

    /// Elementwise hard threshold to `[0, 1]`.
    pub fn clamp01(&mut self, a: Var) -> Result<Var> {
        self.unary("clamp01", a, |x| x.clamp(0.0, 1.0), Op::Clamp01(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.unary("leaky_relu", a, |x| if x > 0.0 { x } else { slope * x }, Op::LeakyRelu { a, slope })
    }

    /// `log(1 + exp(x))`.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary("softplus", a, softplus, Op::Softplus(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, |x| x * x, Op::Square(a))
    }

    /// Euclidean norm over the last axis.
    pub fn norm_last_axis(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let shape = av.shape();
        let d = *shape.last().unwrap();
        let out_shape = if shape.len() > 1 { shape[..shape.len() - 1].to_vec() } else { vec![1] };
        let data = av.data().chunks(d).map(|row| row.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        let out = Tensor::new(out_shape, data)?;
        self.push("norm_last_axis", out, Op::NormLastAxis(a))
    }

    /// Elementwise `P(N(mean, std^2) > threshold) = 1 - Phi((threshold - mean) / std)`.
    ///
    /// A zero `std` is treated as a point mass: the result is the indicator
    /// `mean > threshold` and carries no gradient.
    pub fn gaussian_exceed(&mut self, mean: Var, std: Var, threshold: f64) -> Result<Var> {
        self.same_shape("gaussian_exceed", mean, std)?;
        let (mv, sv) = (self.value(mean), self.value(std));
        if let Some(s) = sv.data().iter().find(|&&s| s < 0.0) {
            return Err(Error::Parameter(format!("negative standard deviation {s}")));
        }
        let data = mv
            .data()
            .iter()
            .zip(sv.data())
            .map(|(&m, &s)| gaussian_exceed_value(m, s, threshold))
            .collect();
        let out = Tensor::new(mv.shape().to_vec(), data)?;
        self.push("gaussian_exceed", out, Op::GaussianExceed { mean, std, threshold })
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        self.push("reshape", out, Op::Reshape(a))
    }

    /// Same-padding 2-D cross-correlation.
    ///
    /// `x` is `[C_in, H, W]` or `[B, C_in, H, W]`; `k` is `[C_out, C_in, kh, kw]`
    /// with odd spatial extents. Output keeps the spatial size of `x`.
    pub fn conv2d(&mut self, x: Var, k: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(k).to_vec();
        let (batch, c_in, h, w, batched) = match xs[..] {
            [c, h, w] => (1, c, h, w, false),
            [b, c, h, w] => (b, c, h, w, true),
            _ => return Err(Error::dim("conv2d", format!("input must be 3-D or 4-D, got {xs:?}"))),
        };
        let [c_out, kc, kh, kw] = ks[..] else {
            return Err(Error::dim("conv2d", format!("kernel must be 4-D, got {ks:?}")));
        };
        if kc != c_in {
            return Err(Error::dim("conv2d", format!("input has {c_in} channels, kernel expects {kc}")));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::dim("conv2d", format!("kernel extent {kh}x{kw} must be odd")));
        }
        let geom = ConvGeom { batch, c_in, c_out, h, w, kh, kw };
        let mut out = vec![0.0; batch * c_out * h * w];
        kernels::conv2d_forward(geom, self.value(x).data(), self.value(k).data(), &mut out);
        let shape = if batched { vec![batch, c_out, h, w] } else { vec![c_out, h, w] };
        self.push("conv2d", Tensor::new(shape, out)?, Op::Conv2d { x, k, geom })
    }

    /// Per-sample matrix-vector product: `w[B, m, d] * z[B, d] -> [B, m]`.
    pub fn batched_matvec(&mut self, w: Var, z: Var) -> Result<Var> {
        let ws = self.shape(w).to_vec();
        let zs = self.shape(z).to_vec();
        let (&[b, m, d], &[bz, dz]) = (&ws[..], &zs[..]) else {
            return Err(Error::dim("batched_matvec", format!("{ws:?} x {zs:?}")));
        };
        if b != bz || d != dz {
            return Err(Error::dim("batched_matvec", format!("{ws:?} x {zs:?}")));
        }
        let (wv, zv) = (self.value(w).data(), self.value(z).data());
        let mut out = vec![0.0; b * m];
        for s in 0..b {
            let zrow = &zv[s * d..][..d];
            for i in 0..m {
                let wrow = &wv[(s * m + i) * d..][..d];
                out[s * m + i] = wrow.iter().zip(zrow).map(|(a, b)| a * b).sum();
            }
        }
        self.push("batched_matvec", Tensor::new(vec![b, m], out)?, Op::BatchedMatVec { w, z })
    }

    /// Gradient of the last backward pass with respect to `v`; zeros when
    /// `v` was not reachable from the loss.
    pub fn grad(&self, v: Var) -> Tensor {
        let value = &self.nodes[v.0].value;
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::new(value.shape().to_vec(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(value.shape()),
        }
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let val = |v: Var| self.nodes[v.0].value.data();
        let len = |v: Var| self.nodes[v.0].value.len();
        let elementwise = |grads: &mut [Option<Vec<f64>>], a: Var, f: &dyn Fn(usize) -> f64| {
            let dst = accumulate(&mut grads[a.0], len(a));
            for (j, d) in dst.iter_mut().enumerate() {
                *d += g[j] * f(j);
            }
        };
        match node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let (br, bc) = (self.shape(b)[0], self.shape(b)[1]);
                let p = if trans_b { br } else { bc };
                let gm = MatRef::new(g, m, p);
                {
                    // dA = G * B^T (or G * B when B was used transposed)
                    let bt = if trans_b { MatRef::new(val(b), br, bc) } else { MatRef::t(val(b), br, bc) };
                    let dst = accumulate(&mut grads[a.0], m * k);
                    kernels::gemm(gm, bt, 1.0, dst);
                }
                let at = MatRef::t(val(a), m, k);
                let dst = accumulate(&mut grads[b.0], br * bc);
                if trans_b {
                    // dB = G^T * A
                    kernels::gemm(MatRef::t(g, m, p), MatRef::new(val(a), m, k), 1.0, dst);
                } else {
                    // dB = A^T * G
                    kernels::gemm(at, gm, 1.0, dst);
                }
            }
            Op::Add(a, b) => {
                elementwise(grads, a, &|_| 1.0);
                elementwise(grads, b, &|_| 1.0);
            }
            Op::Sub(a, b) => {
                elementwise(grads, a, &|_| 1.0);
                elementwise(grads, b, &|_| -1.0);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                elementwise(grads, a, &|j| bv[j]);
                elementwise(grads, b, &|j| av[j]);
            }
            Op::AddBroadcast { x, bias, inner } => {
                elementwise(grads, x, &|_| 1.0);
                let c = len(bias);
                let dst = accumulate(&mut grads[bias.0], c);
                for (j, gj) in g.iter().enumerate() {
                    dst[(j / inner) % c] += gj;
                }
            }
            Op::Affine { a, scale } => elementwise(grads, a, &|_| scale),
            Op::SigmoidTemp { a, lambda } => elementwise(grads, a, &|j| out[j] * (1.0 - out[j]) / lambda),
            Op::Clamp01(a) => {
                let av = val(a);
                elementwise(grads, a, &|j| if av[j] > 0.0 && av[j] < 1.0 { 1.0 } else { 0.0 });
            }
            Op::LeakyRelu { a, slope } => {
                let av = val(a);
                elementwise(grads, a, &|j| if av[j] > 0.0 { 1.0 } else { slope });
            }
            Op::Softplus(a) => {
                let av = val(a);
                elementwise(grads, a, &|j| stable_sigmoid(av[j]));
            }
            Op::Square(a) => {
                let av = val(a);
                elementwise(grads, a, &|j| 2.0 * av[j]);
            }
            Op::NormLastAxis(a) => {
                let av = val(a);
                let d = *self.shape(a).last().unwrap();
                let dst = accumulate(&mut grads[a.0], av.len());
                for (r, (row, drow)) in av.chunks(d).zip(dst.chunks_mut(d)).enumerate() {
                    if out[r] > 0.0 {
                        let s = g[r] / out[r];
                        for (dv, x) in drow.iter_mut().zip(row) {
                            *dv += s * x;
                        }
                    }
                }
            }
            Op::GaussianExceed { mean, std, threshold } => {
                let (mv, sv) = (val(mean), val(std));
                // d/dmean = pdf(u) / s, d/ds = pdf(u) * u / s with u = (t - mean) / s
                let coef = |j: usize| -> (f64, f64) {
                    let s = sv[j];
                    if s > 0.0 {
                        let u = (threshold - mv[j]) / s;
                        let p = std_normal_pdf(u);
                        (p / s, p * u / s)
                    } else {
                        (0.0, 0.0)
                    }
                };
                elementwise(grads, mean, &|j| coef(j).0);
                elementwise(grads, std, &|j| coef(j).1);
            }
            Op::Sum(a) | Op::Mean(a) => {
                let n = len(a);
                let scale = if matches!(node.op, Op::Mean(_)) { g[0] / n as f64 } else { g[0] };
                for d in accumulate(&mut grads[a.0], n).iter_mut() {
                    *d += scale;
                }
            }
            Op::Reshape(a) => elementwise(grads, a, &|_| 1.0),
            Op::Conv2d { x, k, geom } => {
                let (lx, lk) = (len(x), len(k));
                let mut gx = grads[x.0].take().unwrap_or_else(|| vec![0.0; lx]);
                let gk = accumulate(&mut grads[k.0], lk);
                kernels::conv2d_backward(geom, val(x), val(k), g, Some(&mut gx), Some(gk));
                grads[x.0] = Some(gx);
            }
            Op::BatchedMatVec { w, z } => {
                let [b, m, d] = self.shape(w)[..] else { unreachable!() };
                let (wv, zv) = (val(w), val(z));
                {
                    let dw = accumulate(&mut grads[w.0], b * m * d);
                    for s in 0..b {
                        let zrow = &zv[s * d..][..d];
                        for i in 0..m {
                            let gi = g[s * m + i];
                            for (dv, zj) in dw[(s * m + i) * d..][..d].iter_mut().zip(zrow) {
                                *dv += gi * zj;
                            }
                        }
                    }
                }
                let dz = accumulate(&mut grads[z.0], b * d);
                for s in 0..b {
                    for i in 0..m {
                        let gi = g[s * m + i];
                        let wrow = &wv[(s * m + i) * d..][..d];
                        for (dv, wj) in dz[s * d..][..d].iter_mut().zip(wrow) {
                            *dv += gi * wj;
                        }
                    }
                }
            }
        }
    }
}
