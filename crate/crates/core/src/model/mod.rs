//! Shared/private multi-task network.

mod config;
mod encoder;
mod network;
mod task;

pub use config::{Flags, ModelConfig};
pub use encoder::{multitask_loss, pair_merge, pool, PrivateEncoder};
pub use network::{assemble, ForwardOutput, Mode, Model, OutputKind, Prediction, TaskForward, TaskModule};
pub use task::{MetricKind, TaskKind, TaskSpec};
