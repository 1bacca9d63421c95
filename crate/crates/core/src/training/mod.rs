//! Pairwise losses, optimisation, gradient checking and a toy training
//! loop on a synthetic term-overlap task.

mod data;
mod gradcheck;
mod loss;
mod optim;
mod train;

pub use data::{term_overlap, SyntheticDataset, TaskSpec, Triple, ValidationQuery};
pub use gradcheck::{batch_loss_and_grads, grad_check, GradCheckReport};
pub use loss::{margin_mse_batch, margin_mse_loss, ranknet_loss, LossKind};
pub use optim::{warmup_lr, AdamW};
pub use train::{evaluate, train_toy, write_trace_csv, TracePoint, TrainConfig, TrainOutcome};
