//! Sequence-learning primitives for training autoregressive models against
//! edit distance.
//!
//! The centerpiece is the edit-distance Q-value kernel ([`qvalues::q_values`]):
//! for every prefix of a hypothesis it computes the exact set of next tokens
//! that can still lead to a completion with minimum edit distance against a
//! reference. On top of the kernel sit the optimal-completion training targets
//! ([`policy`]), the training losses ([`loss`]), brute-force verification
//! oracles ([`oracle`]) and error-rate metrics ([`metrics`]).
//!
//! The crate is `no_std`-compatible (requires `alloc`); IO, models and the
//! CLI live in the companion `ocd` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod edit;
#[cfg(test)]
pub(crate) mod testutil;
pub mod loss;
pub mod metrics;
pub mod oracle;
pub mod policy;
pub mod qvalues;
pub mod seq;

pub use edit::{edit_distance, prefix_distance_table, DistanceTable};
pub use metrics::{cer, prefix_mismatch, wer, CorpusMetrics};
pub use oracle::{generate_pairs, oracle_check, oracle_q_exhaustive, oracle_q_suffix, OracleReport};
pub use loss::{hamming_accuracy, mle_loss, ocd_loss, ss_loss, LossError, LossReport};
pub use policy::{hard_targets, oct_select, soft_policy, OctStrategy, PolicyError, PolicyTarget};
pub use qvalues::{q_values, q_values_batch, QRow, QTable};
pub use seq::{Extension, Sequence, TokenId};
