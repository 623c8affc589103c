//! Toy model stack on top of the gated-slot-attention kernels: the token
//! mixing layer, pre-norm residual blocks, a synthetic associative-recall
//! task, AdamW training with a warmup+cosine schedule, a binary checkpoint
//! container, and a CPU throughput benchmark.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod layer;
pub mod model;
pub mod ops;
pub mod optim;
pub mod tasks;
pub mod train;

pub use config::{GateMode, ModelConfig};
pub use model::{ModelGrads, ModelParams};
pub use tasks::{MqarInstance, MqarSpec};
