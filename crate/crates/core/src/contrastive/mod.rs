//! Contrastive representation learning: encoder, InfoNCE loss, gradients,
//! optimizer, training loop and sliding-window embedding.

mod embed;
mod encoder;
mod gradcheck;
mod graph;
mod ops;
mod optim;
mod standardize;
mod tensor;
mod train;

pub use embed::embed;
pub use encoder::{encode, forward, EncoderConfig, EncoderParams, Forward};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use ops::{conv2d, conv_out, info_nce, linear, LossReport, COSINE_EPS};
pub use optim::{AdamConfig, AdamState};
pub use standardize::{Standardizer, STD_FLOOR};
pub use tensor::Tensor;
pub use train::{crops_to_tensor, train, train_with_progress, TrainConfig, TrainOutcome, TrainState};
