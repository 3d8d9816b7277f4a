//! Minimal reverse-mode autodiff over `ndarray` f64 tensors, plus the layer,
//! optimizer, and checkpoint machinery shared by all trainable components.
//!
//! Design notes:
//! - Everything runs single-threaded in f64 with fixed accumulation order,
//!   so identical seeds give bit-identical checkpoints.
//! - Model forwards are written once against the [`ctx::Ctx`] trait and
//!   executed either on the tape ([`ctx::GraphCtx`]) or value-by-value
//!   ([`ctx::EvalCtx`]).

pub mod checkpoint;
pub mod ctx;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod layers;
pub mod optim;
pub mod param;
pub mod specops;
pub mod tensor;

pub use checkpoint::{file_sha256, hex_digest, Checkpoint, CheckpointError};
pub use ctx::{Ctx, EvalCtx, GraphCtx};
pub use graph::{Gradients, Graph, NodeId};
pub use kernels::Conv1dSpec;
pub use layers::{BiLstm, Conv1d, LayerNorm, Linear, Lstm, MultiHeadAttention, Padding};
pub use optim::{Adam, AdamConfig};
pub use param::{HasParams, Param};
pub use tensor::{from_vec, scalar, scalar_value, uniform_init, zeros, Tensor};
