use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use super::{AdamState, TrainConfig};
use crate::autodiff::{Tape, Tensor};
use crate::checkpoint::Checkpoint;
use crate::data::Dataset;
use crate::distributions::StretchConfig;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::{init_decoder, objective, Decoder, LossBreakdown};
use crate::rng::{seeded, stream, StreamRng};
use crate::samplers::{init_sampler, SamplerParams};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.msko";
pub const METRICS_HEADER: [&str; 5] = ["epoch", "recon_mse", "sparsity_l0", "total", "wall_seconds"];

/// Latent draws used for the logged expected L0 of the hypernetwork sampler.
const L0_LOG_SAMPLES: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub sampler: SamplerParams,
    pub decoder: Decoder,
}

impl Model {
    pub fn init(cfg: &TrainConfig, side: usize) -> Result<Self> {
        cfg.validate()?;
        let sampler = init_sampler(cfg.sampler, side, cfg.latent_dim, cfg.repr_width, cfg.seed)?;
        let decoder = init_decoder(cfg.decoder, side, cfg.decoder_width(), &mut seeded(cfg.seed, stream::DECODER))?;
        Ok(Model { sampler, decoder })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { sampler: self.sampler.clone(), decoder: Some(self.decoder.clone()) }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let decoder = ck.decoder.ok_or_else(|| Error::Format("checkpoint has no decoder section".into()))?;
        if decoder.side() != ck.sampler.side() {
            return Err(Error::Format("sampler and decoder disagree on image size".into()));
        }
        Ok(Model { sampler: ck.sampler, decoder })
    }

    fn is_finite(&self) -> bool {
        self.sampler.is_finite() && self.decoder.is_finite()
    }
}

/// Optimizer state around a [`Model`].
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub cfg: TrainConfig,
    stretch: StretchConfig,
    sampler_opt: AdamState,
    decoder_opt: AdamState,
    noise_rng: StreamRng,
}

impl Trainer {
    pub fn new(cfg: &TrainConfig, side: usize) -> Result<Self> {
        Self::from_model(Model::init(cfg, side)?, cfg)
    }

    pub fn from_model(model: Model, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if model.sampler.kind() != cfg.sampler {
            return Err(Error::Config(format!("model holds a {} sampler, config asks for {}", model.sampler.kind(), cfg.sampler)));
        }
        Ok(Trainer {
            sampler_opt: AdamState::new(model.sampler.params()),
            decoder_opt: AdamState::new(model.decoder.params()),
            model,
            cfg: cfg.clone(),
            stretch: cfg.stretch(),
            noise_rng: seeded(cfg.seed, stream::NOISE),
        })
    }

    pub fn stretch(&self) -> &StretchConfig {
        &self.stretch
    }

    pub fn steps(&self) -> u64 {
        self.sampler_opt.step
    }

    /// One noise draw per image, one backward pass, one Adam update of
    /// both the sampler and the decoder. The model is left unchanged when
    /// any value turns non-finite.
    pub fn train_step(&mut self, batch: &Tensor) -> Result<LossBreakdown> {
        let side = self.model.sampler.side();
        if batch.shape().len() != 3 || batch.shape()[1..] != [side, side] {
            return Err(Error::dim("train_step", format!("batch {:?} for {side}x{side} images", batch.shape())));
        }
        let b = batch.shape()[0];
        let mut tape = Tape::new();
        let s_vars = self.model.sampler.bind(&mut tape);
        let d_vars = self.model.decoder.bind(&mut tape);
        let noise = self.model.sampler.draw_noise(&mut self.noise_rng, b);
        let out = self.model.sampler.forward(&mut tape, &s_vars, &noise, &self.stretch)?;
        let x = tape.leaf(batch.clone());
        let obj = objective(&mut tape, &out, x, &self.model.decoder, &d_vars, self.cfg.lambda_sparse, &self.stretch)?;
        tape.backward(obj.total)?;
        let loss = obj.breakdown(&tape);
        let s_grads: Vec<Tensor> = s_vars.iter().map(|&v| tape.grad(v)).collect();
        let d_grads: Vec<Tensor> = d_vars.iter().map(|&v| tape.grad(v)).collect();
        drop(tape);

        let backup = (self.model.clone(), self.sampler_opt.clone(), self.decoder_opt.clone());
        let adam = self.cfg.adam();
        let res = self
            .sampler_opt
            .step(&mut self.model.sampler.params_mut(), &s_grads, &adam)
            .and_then(|_| self.decoder_opt.step(&mut self.model.decoder.params_mut(), &d_grads, &adam));
        let res = res.and_then(|_| {
            if self.model.is_finite() {
                Ok(())
            } else {
                Err(Error::NonFinite(format!("parameter update at step {}", self.sampler_opt.step)))
            }
        });
        if let Err(e) = res {
            (self.model, self.sampler_opt, self.decoder_opt) = backup;
            return Err(e);
        }
        Ok(loss)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Image-weighted mean over the epoch's steps.
    pub recon_mse: f64,
    pub sparsity_l0: f64,
    /// `recon_mse + lambda_sparse * sparsity_l0`.
    pub total: f64,
    pub wall_seconds: f64,
    /// Normalized expected L0 of the distribution at the end of the epoch.
    pub expected_l0: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub metrics: Vec<EpochMetrics>,
}

/// Runs `cfg.epochs` shuffled passes over `train`.
///
/// With `out_dir`, the metrics log and a checkpoint are rewritten
/// atomically after every epoch, so an aborted run leaves the last good
/// epoch on disk.
pub fn train_loop(train: &Dataset, cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg, train.side)?;
    let mut shuffle = seeded(cfg.seed, stream::SHUFFLE);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let start = Instant::now();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_metrics_csv(&dir.join(METRICS_FILE), &metrics)?;
        trainer.model.checkpoint().save_atomic(&dir.join(CHECKPOINT_FILE))?;
    }
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let (mut recon, mut sparsity, mut seen) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let loss = trainer.train_step(&train.batch(chunk))?;
            recon += loss.recon * chunk.len() as f64;
            sparsity += loss.sparsity * chunk.len() as f64;
            seen += chunk.len();
        }
        let (recon, sparsity) = (recon / seen as f64, sparsity / seen as f64);
        let expected_l0 =
            trainer.model.sampler.expected_l0(&trainer.stretch, &mut seeded(cfg.seed, stream::EVAL), L0_LOG_SAMPLES)?;
        let m = EpochMetrics {
            epoch,
            recon_mse: recon,
            sparsity_l0: sparsity,
            total: recon + cfg.lambda_sparse * sparsity,
            wall_seconds: if cfg.log_wall_time { start.elapsed().as_secs_f64() } else { 0.0 },
            expected_l0,
        };
        log::info!(
            "epoch {epoch}: recon {:.6} sparsity {:.6} total {:.6} expected l0 {:.6}",
            m.recon_mse,
            m.sparsity_l0,
            m.total,
            m.expected_l0
        );
        metrics.push(m);
        if let Some(dir) = out_dir {
            write_metrics_csv(&dir.join(METRICS_FILE), &metrics)?;
            trainer.model.checkpoint().save_atomic(&dir.join(CHECKPOINT_FILE))?;
        }
    }
    Ok(TrainOutcome { model: trainer.model, metrics })
}

pub fn write_metrics_csv(path: &Path, rows: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(METRICS_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            r.recon_mse.to_string(),
            r.sparsity_l0.to_string(),
            r.total.to_string(),
            r.wall_seconds.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}

/// Parses a metrics log back into `(epoch, recon, sparsity, total, wall)` rows.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<[f64; 5]>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    let header = r.headers().map_err(|e| Error::Format(e.to_string()))?;
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::Format(format!("unexpected metrics header {header:?}")));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            let mut row = [0.0; 5];
            for (slot, field) in row.iter_mut().zip(rec.iter()) {
                *slot = field.parse().map_err(|_| Error::Format(format!("bad number {field:?}")))?;
            }
            if rec.len() != 5 {
                return Err(Error::Format(format!("metrics row with {} fields", rec.len())));
            }
            Ok(row)
        })
        .collect()
}
