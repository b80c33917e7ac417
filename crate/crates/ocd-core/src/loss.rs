//! Differentiable training losses over per-step log-probability vectors.
//!
//! All losses are cross-entropies between a per-step target distribution and
//! the model's next-token distribution; the per-step values are averaged over
//! supervised tokens so the learning rate is decoupled from sequence length.

use alloc::vec::Vec;
use core::fmt;

use crate::policy::PolicyTarget;
use crate::seq::Sequence;

/// Scalar loss with its per-step breakdown. `total` is the mean of
/// `per_step`; multiply by `token_count` to recover the sum form.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub per_step: Vec<f64>,
    pub token_count: usize,
}

impl LossReport {
    fn from_steps(per_step: Vec<f64>) -> Self {
        let token_count = per_step.len();
        let total = if token_count == 0 {
            0.0
        } else {
            per_step.iter().sum::<f64>() / token_count as f64
        };
        LossReport {
            total,
            per_step,
            token_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossError {
    StepCountMismatch { logprobs: usize, targets: usize },
    /// A log-probability vector does not exponentiate-and-sum to 1.
    NotNormalized { step: usize, sum: f64 },
    VectorLengthMismatch { step: usize, got: usize, want: usize },
}

impl fmt::Display for LossError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossError::StepCountMismatch { logprobs, targets } => write!(
                f,
                "step count mismatch: {logprobs} log-prob vectors vs {targets} target steps"
            ),
            LossError::NotNormalized { step, sum } => write!(
                f,
                "log-probabilities at step {step} sum to {sum}, expected 1 within 1e-6"
            ),
            LossError::VectorLengthMismatch { step, got, want } => write!(
                f,
                "log-prob vector at step {step} has length {got}, expected {want}"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LossError {}

fn check_normalized(logprobs: &[Vec<f64>]) -> Result<(), LossError> {
    for (step, lp) in logprobs.iter().enumerate() {
        let sum: f64 = lp.iter().map(|&v| libm::exp(v)).sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(LossError::NotNormalized { step, sum });
        }
    }
    Ok(())
}

/// Distillation loss: per-step cross-entropy between the optimal-completion
/// policy and the model. Hard target sets are treated as uniform
/// distributions over the set, which leaves gradients unchanged relative to
/// the KL form.
pub fn ocd_loss(logprobs: &[Vec<f64>], targets: &[PolicyTarget]) -> Result<LossReport, LossError> {
    if logprobs.len() != targets.len() {
        return Err(LossError::StepCountMismatch {
            logprobs: logprobs.len(),
            targets: targets.len(),
        });
    }
    check_normalized(logprobs)?;
    let mut per_step = Vec::with_capacity(targets.len());
    for (step, (lp, target)) in logprobs.iter().zip(targets).enumerate() {
        let loss = match target {
            PolicyTarget::Soft(pi) => {
                if pi.len() != lp.len() {
                    return Err(LossError::VectorLengthMismatch {
                        step,
                        got: lp.len(),
                        want: pi.len(),
                    });
                }
                -pi.iter().zip(lp).map(|(&p, &l)| p * l).sum::<f64>()
            }
            PolicyTarget::Hard(set) => {
                let w = 1.0 / set.len() as f64;
                -set.iter()
                    .map(|&ext| w * lp[ext.dense_index(lp.len() - 1)])
                    .sum::<f64>()
            }
        };
        per_step.push(loss);
    }
    Ok(LossReport::from_steps(per_step))
}

/// Teacher-forcing cross-entropy with label smoothing. `logprobs` must cover
/// `|target| + 1` steps, the final one supervising eos.
pub fn mle_loss(
    target: &Sequence,
    logprobs: &[Vec<f64>],
    label_smoothing: f64,
) -> Result<LossReport, LossError> {
    if logprobs.len() != target.len() + 1 {
        return Err(LossError::StepCountMismatch {
            logprobs: logprobs.len(),
            targets: target.len() + 1,
        });
    }
    check_normalized(logprobs)?;
    let eps = label_smoothing;
    let mut per_step = Vec::with_capacity(logprobs.len());
    for (t, lp) in logprobs.iter().enumerate() {
        let idx = if t < target.len() {
            target[t] as usize
        } else {
            lp.len() - 1 // eos
        };
        // The smoothing term is skipped entirely at eps = 0 so -inf
        // log-probabilities of never-targeted tokens cannot poison the sum.
        let smooth = if eps == 0.0 {
            0.0
        } else {
            -eps * lp.iter().sum::<f64>() / lp.len() as f64
        };
        per_step.push(-(1.0 - eps) * lp[idx] + smooth);
    }
    Ok(LossReport::from_steps(per_step))
}

/// Scheduled-sampling loss: ground-truth targets applied to log-probs that
/// were produced while conditioning on mixed prefixes. Numerically identical
/// to [`mle_loss`] with zero smoothing.
pub fn ss_loss(target: &Sequence, logprobs: &[Vec<f64>]) -> Result<LossReport, LossError> {
    mle_loss(target, logprobs, 0.0)
}

/// Fraction of aligned positions with equal tokens, over the longer length.
pub fn hamming_accuracy(rollout: &Sequence, target: &Sequence) -> f64 {
    let max = rollout.len().max(target.len());
    if max == 0 {
        return 1.0;
    }
    let matches = rollout
        .tokens()
        .iter()
        .zip(target.tokens())
        .filter(|(a, b)| a == b)
        .count();
    matches as f64 / max as f64
}
