//! Differentiable primitives: tensors, a reverse-mode tape, the LSTM cell,
//! optimizers, finite-difference gradient checks and checkpoints.

mod checkpoint;
mod gradcheck;
mod lstm;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, ParamRecord, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckReport, ParamGradError, RELATIVE_ERROR_FLOOR};
pub use lstm::{lstm_step, LstmCellParams, LstmState};
pub use optim::{sgd_step, Adam, AdamConfig};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{cosine_similarity, softmax, Gradients, NodeId, Tape};
pub use tensor::Tensor;
