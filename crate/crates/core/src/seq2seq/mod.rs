//! Per-coordinate LSTM encoder/decoder with attention, its losses and the
//! training loop.

mod decode;
mod diagnostics;
mod loss;
mod model;
mod train;

pub use decode::{decode, decode_sequence, encode, locality_mask, DecodeGraph, DecodeTrace, DimSample, Phase};
pub use diagnostics::{matrix_to_csv, mean_alignment, window_mass};
pub use loss::{
    alignment_loss, alignment_loss_node, alignment_loss_node_with, alignment_loss_values, l2_node, reconstruction_loss,
    reconstruction_loss_node, total_loss, total_loss_node, LossWeights,
};
pub use model::{AttentionMode, GaitModel, GaitModelDim, ModelConfig, ModelMeta};
pub use train::{alignment_targets, batch_loss, batch_loss_frozen, train, train_dim, LossCurve, LossRecord, StepLoss, TrainConfig, TrainingSet};
