//! Reconstruction decoders and the training objective.

mod decoder;
pub mod layers;
mod loss;

pub use decoder::{init_decoder, ConvResnet, Decoder, DecoderKind, Mlp, DEFAULT_CONV_FILTERS, DEFAULT_MLP_WIDTH};
pub use loss::{objective, reconstruction_loss, LossBreakdown, ObjectiveVars};
