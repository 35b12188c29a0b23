use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::distributions::StretchConfig;
use crate::error::{Error, Result};
use crate::model::DecoderKind;
use crate::samplers::{SamplerKind, DEFAULT_LATENT_DIM, DEFAULT_REPR_WIDTH};

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub sampler: SamplerKind,
    pub decoder: DecoderKind,
    /// Hidden width (MLP) or filter count (conv); the kind's default when absent.
    pub decoder_width: Option<usize>,
    pub latent_dim: usize,
    pub repr_width: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_sparse: f64,
    /// Sigmoid temperature; 0.3 for the logitNormal samplers and 2/3 for
    /// concrete when absent.
    pub lambda_temp: Option<f64>,
    pub gamma: f64,
    pub eta: f64,
    pub seed: u64,
    /// Record elapsed time in the metrics log. Off by default so the log is
    /// reproducible bit for bit.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let s = StretchConfig::default();
        TrainConfig {
            sampler: SamplerKind::Vanilla,
            decoder: DecoderKind::Mlp,
            decoder_width: None,
            latent_dim: DEFAULT_LATENT_DIM,
            repr_width: DEFAULT_REPR_WIDTH,
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.99,
            epochs: 20,
            batch_size: 128,
            lambda_sparse: 1.0,
            lambda_temp: None,
            gamma: s.gamma,
            eta: s.eta,
            seed: 0,
            log_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn stretch(&self) -> StretchConfig {
        StretchConfig {
            gamma: self.gamma,
            eta: self.eta,
            lambda_temp: self.lambda_temp.unwrap_or_else(|| self.sampler.default_temperature()),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2 }
    }

    pub fn decoder_width(&self) -> usize {
        self.decoder_width.unwrap_or_else(|| self.decoder.default_width())
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        self.stretch().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lambda_sparse >= 0.0 && self.lambda_sparse.is_finite()) {
            return Err(Error::Config(format!("lambda_sparse must be non-negative, got {}", self.lambda_sparse)));
        }
        if self.decoder_width() == 0 {
            return Err(Error::Config("decoder width must be positive".into()));
        }
        if matches!(self.sampler, SamplerKind::Vanilla | SamplerKind::Hypernet) && self.latent_dim == 0 {
            return Err(Error::Config("latent dimension must be positive".into()));
        }
        if self.sampler == SamplerKind::Hypernet && self.repr_width == 0 {
            return Err(Error::Config("representation width must be positive".into()));
        }
        Ok(())
    }
}
