//! Dense network substrate: tensors, a recording tape for reverse-mode
//! gradients, parameter storage, optimizers, checkpoints and gradient checks.

mod checkpoint;
mod gradcheck;
mod layers;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{write_atomic, Checkpoint, MAGIC, VERSION};
pub use gradcheck::{grad_check, grad_check_sampled, relative_error, GradCheckReport, REL_FLOOR};
pub use layers::{Linear, Mlp2};
pub use params::{adam_step, sgd_step, AdamConfig, GradBuffer, ParamEntry, ParamId, ParameterStore};
pub use tape::{
    gaussian_log_density, pair_index, sigmoid, softmax, softmax_cross_entropy, Activation,
    CrossEntropy, NodeGrads, NodeId, Tape,
};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
