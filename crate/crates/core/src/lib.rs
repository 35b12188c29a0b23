//! Learned sparse pixel masks for image reconstruction.
//!
//! A mask distribution over `{0, 1}^(n x n)` is relaxed into a stretched
//! logitNormal law, trained jointly with a reconstruction decoder under a
//! closed-form expected-L0 penalty, and finally collapsed into deterministic
//! top-K masks using the zero-temperature Bernoulli limit.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod distributions;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod rng;
pub mod samplers;
pub mod training;

pub use autodiff::{grad_check, Tape, Tensor, Var};
pub use distributions::{GaussianSpec, StretchConfig};
pub use error::{Error, Result};
