//! Self-supervised gait encoding for 3D skeleton sequences.
//!
//! A per-coordinate LSTM encoder/decoder learns to reconstruct skeleton
//! sequences in reverse order (or to predict or sort them), guided by a
//! Gaussian locality prior on its attention alignment and by a contrastive
//! loss between temporally adjacent sequences. The attention context vectors
//! become gait features for person re-identification.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contrastive;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod features;
pub mod numerics;
pub mod seq2seq;
pub mod skeleton_io;

pub use error::{Error, Result};
