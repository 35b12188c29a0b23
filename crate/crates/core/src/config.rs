//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{gen_gaussian_random_field, load_idx, load_idx_f64, Dataset, DatasetPair, Split};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_MC_SAMPLES;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// `u8` IDX images, e.g. MNIST.
    Idx {
        train_images: PathBuf,
        test_images: PathBuf,
        #[serde(default)]
        train_labels: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        /// Keep only the first images of each split.
        #[serde(default)]
        max_train: Option<usize>,
        #[serde(default)]
        max_test: Option<usize>,
    },
    /// Double-precision IDX fields written by `gen-data`.
    IdxF64 { train: PathBuf, test: PathBuf },
    /// Gaussian random fields generated on the fly.
    Grf { side: usize, train_count: usize, test_count: usize, slope: f64, seed: u64 },
}

impl DataConfig {
    pub fn load(&self) -> Result<DatasetPair> {
        let pair = match self {
            DataConfig::Idx { train_images, test_images, train_labels, test_labels, max_train, max_test } => {
                let cap = |d: Dataset, m: &Option<usize>| if let Some(m) = m { d.truncate(*m) } else { d };
                DatasetPair {
                    train: cap(load_idx(train_images, train_labels.as_deref(), Split::Train)?, max_train),
                    test: cap(load_idx(test_images, test_labels.as_deref(), Split::Test)?, max_test),
                }
            }
            DataConfig::IdxF64 { train, test } => {
                DatasetPair { train: load_idx_f64(train, Split::Train)?, test: load_idx_f64(test, Split::Test)? }
            }
            DataConfig::Grf { side, train_count, test_count, slope, seed } => {
                grf_pair(*side, *train_count, *test_count, *slope, *seed)?
            }
        };
        if pair.train.side != pair.test.side {
            return Err(Error::Config(format!(
                "train images are {0}x{0}, test images {1}x{1}",
                pair.train.side, pair.test.side
            )));
        }
        Ok(pair)
    }
}

/// Generates `train_count + test_count` fields in one standardized batch
/// and splits them, so the splits are disjoint draws.
pub fn grf_pair(side: usize, train_count: usize, test_count: usize, slope: f64, seed: u64) -> Result<DatasetPair> {
    if train_count == 0 || test_count == 0 {
        return Err(Error::Config("both splits need at least one field".into()));
    }
    let all = gen_gaussian_random_field(train_count + test_count, side, slope, seed, Split::Train)?;
    let m = side * side;
    let (tr, te) = all.images().split_at(train_count * m);
    Ok(DatasetPair {
        train: Dataset::new(side, Split::Train, format!("{} train", all.provenance), tr.to_vec())?,
        test: Dataset::new(side, Split::Test, format!("{} test", all.provenance), te.to_vec())?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub mc_samples: usize,
    pub cov_window_start: usize,
    pub cov_window_len: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { mc_samples: DEFAULT_MC_SAMPLES, cov_window_start: 0, cov_window_len: 64 }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.eval.mc_samples == 0 {
            return Err(Error::Config("eval.mc_samples must be positive".into()));
        }
        Ok(())
    }
}
