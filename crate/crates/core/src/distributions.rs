//! LogitNormal masks: temperature sampling, stretching, and the closed-form
//! expected L0 penalty, plus the binary concrete baseline.
//!
//! A coordinate `Y = sigmoid_lambda(X)` with `X ~ N(mu, s^2)` is logitNormal.
//! Stretching maps `Y` to `clamp01((eta - gamma) Y + gamma)`, which puts mass
//! on exactly 0 and exactly 1. The stretched value is nonzero iff
//! `Y > -gamma / (eta - gamma)`, i.e. iff `X > lambda * ln(-gamma / eta)`,
//! so the expected L0 of a stretched mask is a sum of Gaussian tails.

use crate::autodiff::{gaussian_exceed_value, sigmoid_temp, Tape, Tensor, Var};
use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
///
/// Evaluated as `erfc(-x / sqrt 2) / 2` using the fdlibm rational
/// approximations of `erfc` (via `libm`), whose error is below one ulp
/// across the real line. Writing both tails through `erfc` keeps
/// `Phi(x) + Phi(-x) = 1` to rounding.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Density of `sigmoid(X)` for `X ~ N(mu, sigma^2)`.
pub fn logitnormal_pdf(y: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::Domain(format!("logitNormal density needs 0 < y < 1, got {y}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    let logit = (y / (1.0 - y)).ln();
    let u = (logit - mu) / sigma;
    Ok(std_normal_pdf(u) / (sigma * y * (1.0 - y)))
}

/// Stretch interval `(gamma, eta)` and sigmoid temperature.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StretchConfig {
    pub gamma: f64,
    pub eta: f64,
    pub lambda_temp: f64,
}

impl Default for StretchConfig {
    fn default() -> Self {
        StretchConfig { gamma: -0.1, eta: 1.1, lambda_temp: 0.3 }
    }
}

impl StretchConfig {
    pub fn new(gamma: f64, eta: f64, lambda_temp: f64) -> Result<Self> {
        let cfg = StretchConfig { gamma, eta, lambda_temp };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma < 0.0 && self.eta > 1.0 && self.gamma.is_finite() && self.eta.is_finite()) {
            return Err(Error::Config(format!(
                "stretch needs gamma < 0 < 1 < eta, got gamma={} eta={}",
                self.gamma, self.eta
            )));
        }
        if !(self.lambda_temp > 0.0 && self.lambda_temp.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.lambda_temp)));
        }
        Ok(())
    }

    /// Value of `Y` below which the stretched mask is exactly zero.
    pub fn zero_threshold(&self) -> f64 {
        -self.gamma / (self.eta - self.gamma)
    }

    /// Pre-sigmoid threshold `lambda * ln(-gamma / eta)`.
    pub fn pre_sigmoid_threshold(&self) -> f64 {
        self.lambda_temp * (-self.gamma / self.eta).ln()
    }
}

/// Per-coordinate Gaussian law of the pre-sigmoid activation.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSpec {
    pub mu: Vec<f64>,
    pub row_norm: Vec<f64>,
}

impl GaussianSpec {
    pub fn new(mu: Vec<f64>, row_norm: Vec<f64>) -> Result<Self> {
        if mu.len() != row_norm.len() {
            return Err(Error::dim("gaussian_spec", format!("{} means, {} deviations", mu.len(), row_norm.len())));
        }
        if let Some(s) = row_norm.iter().find(|s| !(**s >= 0.0)) {
            return Err(Error::Parameter(format!("row norm must be non-negative, got {s}")));
        }
        Ok(GaussianSpec { mu, row_norm })
    }

    /// Law of `W z + b` for `W[m x d]` given row-major, `z ~ N(0, I_d)`.
    pub fn from_linear(w: &Tensor, b: &Tensor) -> Result<Self> {
        let [m, d] = w.shape()[..] else {
            return Err(Error::dim("gaussian_spec", format!("W must be a matrix, got {:?}", w.shape())));
        };
        if b.len() != m {
            return Err(Error::dim("gaussian_spec", format!("W has {m} rows, b has {}", b.len())));
        }
        let norms = w.data().chunks(d).map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        GaussianSpec::new(b.data().to_vec(), norms)
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// Expected number of nonzero coordinates of the stretched mask.
///
/// Each term is `1 - Phi((lambda ln(-gamma/eta) - b_i) / s_i)`. A zero
/// `s_i` is a deterministic coordinate and contributes the indicator
/// `sigmoid_lambda(b_i) > -gamma / (eta - gamma)`. With `normalized` the
/// sum is divided by the number of coordinates.
pub fn expected_l0(spec: &GaussianSpec, cfg: &StretchConfig, normalized: bool) -> Result<f64> {
    cfg.validate()?;
    let t = cfg.pre_sigmoid_threshold();
    let y0 = cfg.zero_threshold();
    let total: f64 = spec
        .mu
        .iter()
        .zip(&spec.row_norm)
        .map(|(&b, &s)| {
            if s > 0.0 {
                gaussian_exceed_value(b, s, t)
            } else if sigmoid_temp(b, cfg.lambda_temp) > y0 {
                1.0
            } else {
                0.0
            }
        })
        .sum();
    Ok(if normalized { total / spec.len().max(1) as f64 } else { total })
}

/// Zero-temperature selection probabilities `1 - Phi(-b_i / s_i)`.
///
/// Deterministic coordinates (`s_i = 0`) select when `b_i > 0`, with 1/2 at `b_i = 0`.
pub fn collapse_prob(spec: &GaussianSpec) -> Vec<f64> {
    spec.mu
        .iter()
        .zip(&spec.row_norm)
        .map(|(&b, &s)| {
            if s > 0.0 {
                std_normal_cdf(b / s)
            } else if b > 0.0 {
                1.0
            } else if b < 0.0 {
                0.0
            } else {
                0.5
            }
        })
        .collect()
}

/// Correlated logitNormal draw `sigmoid_lambda(W z + b)`.
///
/// `w` is `[m, d]`, `b` is `[m]`, `z` is `[d]` (result `[m]`) or `[B, d]`
/// (result `[B, m]`).
pub fn sample_correlated(tape: &mut Tape, w: Var, b: Var, z: Var, lambda: f64) -> Result<Var> {
    let pre = correlated_preactivation(tape, w, b, z)?;
    tape.sigmoid_temp(pre, lambda)
}

pub(crate) fn correlated_preactivation(tape: &mut Tape, w: Var, b: Var, z: Var) -> Result<Var> {
    let zshape = tape.shape(z).to_vec();
    let single = zshape.len() == 1;
    let z2 = if single { tape.reshape(z, &[1, zshape[0]])? } else { z };
    let wz = tape.matmul_t(z2, w)?;
    let pre = tape.add_bias(wz, b)?;
    if single {
        let m = tape.shape(pre)[1];
        tape.reshape(pre, &[m])
    } else {
        Ok(pre)
    }
}

/// Independent logitNormal draw `sigmoid_lambda(mu + z * sigma)`.
///
/// `mu` and `sigma` are `[m]`; `z` is `[m]` or `[B, m]`.
pub fn sample_independent(tape: &mut Tape, mu: Var, sigma: Var, z: Var, lambda: f64) -> Result<Var> {
    if let Some(s) = tape.value(sigma).data().iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::Parameter(format!("sigma must be non-negative, got {s}")));
    }
    let pre = independent_preactivation(tape, mu, sigma, z)?;
    tape.sigmoid_temp(pre, lambda)
}

pub(crate) fn independent_preactivation(tape: &mut Tape, mu: Var, sigma: Var, z: Var) -> Result<Var> {
    let m = tape.value(mu).len();
    let zshape = tape.shape(z).to_vec();
    if tape.value(sigma).len() != m || zshape.last() != Some(&m) {
        return Err(Error::dim(
            "sample_independent",
            format!("mu {m}, sigma {}, z {zshape:?}", tape.value(sigma).len()),
        ));
    }
    // z * sigma broadcast over the batch via a [B, m] copy of sigma
    let batch = tape.value(z).len() / m;
    let sig = if batch == 1 && zshape.len() == 1 {
        sigma
    } else {
        let zeros = tape.leaf(Tensor::zeros(&zshape));
        tape.add_bias(zeros, sigma)?
    };
    let scaled = tape.mul(z, sig)?;
    if zshape.len() == 1 {
        tape.add(scaled, mu)
    } else {
        tape.add_bias(scaled, mu)
    }
}

/// `clamp01((eta - gamma) y + gamma)`.
pub fn stretch(tape: &mut Tape, y: Var, cfg: &StretchConfig) -> Result<Var> {
    cfg.validate()?;
    let lin = tape.affine(y, cfg.eta - cfg.gamma, cfg.gamma)?;
    tape.clamp01(lin)
}

/// Logistic noise `ln u - ln(1 - u)` for `u` strictly inside `(0, 1)`.
pub fn logistic_noise(u: &Tensor) -> Result<Tensor> {
    if let Some(v) = u.data().iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(Error::Domain(format!("uniform draw {v} outside (0, 1)")));
    }
    Tensor::new(u.shape().to_vec(), u.data().iter().map(|&v| v.ln() - (-v).ln_1p()).collect())
}

/// Relaxed binary concrete draw `sigmoid((log_alpha + ln u - ln(1 - u)) / lambda)`.
pub fn sample_concrete(tape: &mut Tape, log_alpha: Var, lambda: f64, u: &Tensor) -> Result<Var> {
    let noise = logistic_noise(u)?;
    let m = tape.value(log_alpha).len();
    if noise.shape().last() != Some(&m) {
        return Err(Error::dim("sample_concrete", format!("log_alpha {m}, u {:?}", noise.shape())));
    }
    let single = noise.shape().len() == 1;
    let g = tape.leaf(noise);
    let logits = if single { tape.add(g, log_alpha)? } else { tape.add_bias(g, log_alpha)? };
    tape.sigmoid_temp(logits, lambda)
}

/// `P(stretched concrete > 0) = sigmoid(log_alpha - lambda ln(-gamma / eta))`.
pub fn concrete_expected_l0(log_alpha: &[f64], cfg: &StretchConfig, normalized: bool) -> f64 {
    let shift = cfg.pre_sigmoid_threshold();
    let total: f64 = log_alpha.iter().map(|&a| sigmoid_temp(a - shift, 1.0)).sum();
    if normalized {
        total / log_alpha.len().max(1) as f64
    } else {
        total
    }
}

/// Normalized expected L0 on the tape for Gaussian pre-activations.
pub fn expected_l0_on_tape(tape: &mut Tape, mean: Var, std: Var, cfg: &StretchConfig) -> Result<Var> {
    cfg.validate()?;
    let terms = tape.gaussian_exceed(mean, std, cfg.pre_sigmoid_threshold())?;
    tape.mean(terms)
}

/// Normalized expected L0 on the tape for a concrete mask.
pub fn concrete_expected_l0_on_tape(tape: &mut Tape, log_alpha: Var, cfg: &StretchConfig) -> Result<Var> {
    cfg.validate()?;
    let shifted = tape.affine(log_alpha, 1.0, -cfg.pre_sigmoid_threshold())?;
    let p = tape.sigmoid_temp(shifted, 1.0)?;
    tape.mean(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_tensor, seeded};

    #[test]
    fn cdf_symmetry_and_center() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        for &x in &[0.1, 0.7, 1.3, 2.5, 4.0, 7.5] {
            assert!((std_normal_cdf(x) + std_normal_cdf(-x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pdf_rejects_edges() {
        assert!(matches!(logitnormal_pdf(0.0, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(logitnormal_pdf(1.0, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(logitnormal_pdf(0.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn pdf_at_half() {
        // logit(1/2) = 0, so the density is 4 / sqrt(2 pi)
        let p = logitnormal_pdf(0.5, 0.0, 1.0).unwrap();
        assert!((p - 1.595_769_121_605_731).abs() < 1e-12);
    }

    #[test]
    fn pdf_symmetric_for_centered_law() {
        for &y in &[0.01, 0.2, 0.37, 0.49] {
            let a = logitnormal_pdf(y, 0.0, 1.78).unwrap();
            let b = logitnormal_pdf(1.0 - y, 0.0, 1.78).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn stretch_config_rejects_bad_bounds() {
        assert!(StretchConfig::new(0.1, 1.1, 0.3).is_err());
        assert!(StretchConfig::new(-0.1, 0.9, 0.3).is_err());
        assert!(StretchConfig::new(-0.1, 1.1, 0.0).is_err());
        let cfg = StretchConfig::default();
        let t = cfg.zero_threshold();
        assert!(t > 0.0 && t < 1.0);
    }

    #[test]
    fn stretch_atoms_and_fixed_point() {
        let cfg = StretchConfig::default();
        let mut tape = Tape::new();
        let y = tape.leaf(Tensor::vector(vec![0.0, 1.0, 0.5]));
        let s = stretch(&mut tape, y, &cfg).unwrap();
        let v = tape.value(s).data();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 1.0);
        assert!((v[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stretch_rejects_invalid_config() {
        let mut tape = Tape::new();
        let y = tape.leaf(Tensor::vector(vec![0.5]));
        let bad = StretchConfig { gamma: 0.2, eta: 1.1, lambda_temp: 0.3 };
        assert!(matches!(stretch(&mut tape, y, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn expected_l0_saturates() {
        let cfg = StretchConfig::default();
        let spec = GaussianSpec::new(vec![1e6, -1e6], vec![1.0, 1.0]).unwrap();
        let l0 = expected_l0(&spec, &cfg, false).unwrap();
        assert!((l0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expected_l0_deterministic_coordinates() {
        let cfg = StretchConfig::default();
        // sigmoid_0.3(0) = 0.5 > 1/12 selects, sigmoid_0.3(-3) ~ 4.5e-5 does not
        let spec = GaussianSpec::new(vec![0.0, -3.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(expected_l0(&spec, &cfg, false).unwrap(), 1.0);
        assert_eq!(expected_l0(&spec, &cfg, true).unwrap(), 0.5);
    }

    #[test]
    fn expected_l0_closed_form_values() {
        // 1 - Phi(ln(1/11)) and 1 - Phi(0.3 ln(1/11)), checked by Monte Carlo in the
        // integration tests
        let spec = GaussianSpec::new(vec![0.0], vec![1.0]).unwrap();
        let l1 = expected_l0(&spec, &StretchConfig::new(-0.1, 1.1, 1.0).unwrap(), false).unwrap();
        assert!((l1 - 0.991_755_5).abs() < 1e-4, "{l1}");
        let l3 = expected_l0(&spec, &StretchConfig::new(-0.1, 1.1, 0.3).unwrap(), false).unwrap();
        assert!((l3 - 0.764).abs() < 1e-3, "{l3}");
    }

    #[test]
    fn collapse_prob_cases() {
        let spec = GaussianSpec::new(vec![0.0, -5.0, -1e9, 2.0, 0.0, -1.0], vec![3.0, 5.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let p = collapse_prob(&spec);
        assert_eq!(p[0], 0.5);
        assert!((p[1] - 0.158_655_253_931_457_05).abs() < 1e-12);
        assert!(p[2] < 1e-300);
        assert_eq!(&p[3..], &[1.0, 0.5, 0.0]);
    }

    #[test]
    fn gaussian_spec_validates() {
        assert!(GaussianSpec::new(vec![0.0], vec![-1.0]).is_err());
        assert!(GaussianSpec::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let w = Tensor::new(vec![2, 2], vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        let spec = GaussianSpec::from_linear(&w, &Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert_eq!(spec.row_norm, vec![5.0, 0.0]);
    }

    #[test]
    fn correlated_degenerate_cases() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(&[5, 3]));
        let b = tape.leaf(Tensor::zeros(&[5]));
        let z = tape.leaf(Tensor::vector(vec![0.3, -1.0, 2.0]));
        let y = sample_correlated(&mut tape, w, b, z, 0.3).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.5));

        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::full(&[3, 2], 0.7));
        let bvals = vec![-1.0, 0.2, 3.0];
        let b = tape.leaf(Tensor::vector(bvals.clone()));
        let z = tape.leaf(Tensor::zeros(&[2]));
        let y = sample_correlated(&mut tape, w, b, z, 0.3).unwrap();
        for (v, bi) in tape.value(y).data().iter().zip(&bvals) {
            assert_eq!(*v, sigmoid_temp(*bi, 0.3));
        }
    }

    #[test]
    fn correlated_rejects_shape_mismatch() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(&[5, 3]));
        let b = tape.leaf(Tensor::zeros(&[4]));
        let z = tape.leaf(Tensor::zeros(&[3]));
        assert!(matches!(sample_correlated(&mut tape, w, b, z, 1.0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn independent_zero_sigma_is_deterministic() {
        let mut rng = seeded(3, 0);
        let mut tape = Tape::new();
        let mu = tape.leaf(Tensor::vector(vec![0.4, -0.2]));
        let sigma = tape.leaf(Tensor::zeros(&[2]));
        let z = tape.leaf(normal_tensor(&mut rng, &[7, 2]));
        let y = sample_independent(&mut tape, mu, sigma, z, 0.3).unwrap();
        for row in tape.value(y).data().chunks(2) {
            assert_eq!(row, &[sigmoid_temp(0.4, 0.3), sigmoid_temp(-0.2, 0.3)]);
        }
    }

    #[test]
    fn independent_rejects_negative_sigma() {
        let mut tape = Tape::new();
        let mu = tape.leaf(Tensor::zeros(&[2]));
        let sigma = tape.leaf(Tensor::vector(vec![1.0, -0.5]));
        let z = tape.leaf(Tensor::zeros(&[2]));
        assert!(matches!(sample_independent(&mut tape, mu, sigma, z, 1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn concrete_median_and_monotonicity() {
        let mut tape = Tape::new();
        let la = tape.leaf(Tensor::zeros(&[1]));
        let x = sample_concrete(&mut tape, la, 2.0 / 3.0, &Tensor::vector(vec![0.5])).unwrap();
        assert_eq!(tape.value(x).item(), 0.5);

        let us: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        let la = tape.leaf(Tensor::full(&[us.len()], 0.3));
        let x = sample_concrete(&mut tape, la, 2.0 / 3.0, &Tensor::vector(us)).unwrap();
        assert!(tape.value(x).data().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn concrete_rejects_boundary_uniforms() {
        let mut tape = Tape::new();
        let la = tape.leaf(Tensor::zeros(&[2]));
        for u in [0.0, 1.0] {
            let r = sample_concrete(&mut tape, la, 1.0, &Tensor::vector(vec![0.5, u]));
            assert!(matches!(r, Err(Error::Domain(_))));
        }
    }
}
