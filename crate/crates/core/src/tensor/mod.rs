//! Dense kernels, the gradient tape and optimizer primitives.

pub mod attention;
pub mod kernels;
pub mod matrix;
pub mod optim;
pub mod tape;

pub use attention::{AttentionKind, RowAttention};
pub use kernels::{log_softmax, lstm_cell, softmax, LstmParams};
pub use matrix::Matrix;
pub use optim::{clip_gradients, dropout, dropout_mask, global_norm, sgd_step};
pub use tape::{GradientTape, Gradients, NodeId};
