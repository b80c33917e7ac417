//! Trainable side of the optimal-completion toolkit: a small GRU
//! encoder-decoder with exact hand-written gradients, rollout generation,
//! greedy/beam decoding, synthetic transduction tasks, checkpointing and the
//! training loop behind the `ocd` binary.

pub mod checkpoint;
pub mod decode;
pub mod eval;
pub mod model;
pub mod rollout;
pub mod tasks;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use decode::{beam_search, greedy_decode, BeamHypothesis};
pub use eval::{evaluate, EvalMetrics};
pub use model::{AdamParams, ModelConfig, ModelParams, OptimizerState, SeqModel, ToyModel};
pub use rollout::{sample_rollout, sampling_probability, scheduled_prefix_pass, Rollout, Schedule};
pub use tasks::{DatasetRecord, Task, VocabSpec};
pub use train::{TrainConfig, TrainMethod};
