//! Training trajectories: on-policy samples, scheduled mixed prefixes and
//! the sampling-probability schedule.

use ocd_core::seq::{Sequence, TokenId};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::model::SeqModel;

/// A sampled sequence with the per-step model distributions that produced it.
#[derive(Debug, Clone)]
pub struct Rollout {
    /// Sampled tokens, excluding eos.
    pub tokens: Sequence,
    /// Whether sampling terminated by emitting eos (vs hitting the cap).
    pub ended_with_eos: bool,
    /// One log-probability vector per emitted decision; includes the eos
    /// step when `ended_with_eos`.
    pub per_step_logprobs: Vec<Vec<f64>>,
}

fn sample_index<R: Rng>(logprobs: &[f64], rng: &mut R) -> usize {
    let weights: Vec<f64> = logprobs.iter().map(|&l| l.exp()).collect();
    WeightedIndex::new(&weights)
        .expect("log-probabilities define a distribution")
        .sample(rng)
}

/// Ancestral sampling at temperature 1 until eos or `max_len` tokens.
pub fn sample_rollout<M: SeqModel, R: Rng>(
    model: &M,
    x: &Sequence,
    max_len: usize,
    rng: &mut R,
) -> Rollout {
    assert!(max_len >= 1);
    let vocab = model.vocab_size();
    let mut state = model.start(x);
    let mut prev: Option<TokenId> = None;
    let mut tokens = Sequence::empty();
    let mut per_step_logprobs = Vec::new();
    let mut ended_with_eos = false;
    while tokens.len() < max_len {
        let (logprobs, next) = model.step(&state, prev);
        let idx = sample_index(&logprobs, rng);
        per_step_logprobs.push(logprobs);
        state = next;
        if idx == vocab {
            ended_with_eos = true;
            break;
        }
        tokens.push(idx as TokenId);
        prev = Some(idx as TokenId);
    }
    Rollout {
        tokens,
        ended_with_eos,
        per_step_logprobs,
    }
}

/// Decode exactly `|target| + 1` steps; at each step the next conditioning
/// token is drawn from the model with probability `p_sample`, otherwise it is
/// the ground-truth token. Returns the conditioning tokens consumed after the
/// bos step alongside the per-step log-probabilities.
pub fn scheduled_prefix_pass<M: SeqModel, R: Rng>(
    model: &M,
    x: &Sequence,
    target: &Sequence,
    p_sample: f64,
    rng: &mut R,
) -> (Vec<Vec<f64>>, Vec<TokenId>) {
    assert!((0.0..=1.0).contains(&p_sample));
    let vocab = model.vocab_size();
    let mut state = model.start(x);
    let mut prev: Option<TokenId> = None;
    let mut logprobs_out = Vec::with_capacity(target.len() + 1);
    let mut conditioning = Vec::with_capacity(target.len());
    for t in 0..=target.len() {
        let (logprobs, next) = model.step(&state, prev);
        state = next;
        if t < target.len() {
            // With p_sample == 0 the pass must be bit-identical to teacher
            // forcing, so the rng is only consulted when mixing can happen.
            let use_model = p_sample > 0.0 && rng.gen::<f64>() < p_sample;
            let tok = if use_model {
                let idx = sample_index(&logprobs, rng);
                // A sampled eos cannot be fed back in; fall back to the
                // ground-truth token so the pass always covers every step.
                if idx == vocab {
                    target[t]
                } else {
                    idx as TokenId
                }
            } else {
                target[t]
            };
            conditioning.push(tok);
            prev = Some(tok);
        }
        logprobs_out.push(logprobs);
    }
    (logprobs_out, conditioning)
}

/// Linear ramp of the model-sampling probability, clamped after `ramp_steps`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Schedule {
    pub p_start: f64,
    pub p_end: f64,
    pub ramp_steps: u64,
}

impl Schedule {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("p_start", self.p_start), ("p_end", self.p_end)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("schedule.{name} must be in [0,1], got {v}"));
            }
        }
        Ok(())
    }
}

/// Sampling probability at a training step.
pub fn sampling_probability(step: u64, schedule: &Schedule) -> f64 {
    if schedule.ramp_steps == 0 || step >= schedule.ramp_steps {
        schedule.p_end
    } else {
        let frac = step as f64 / schedule.ramp_steps as f64;
        schedule.p_start + (schedule.p_end - schedule.p_start) * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Fixed per-step distributions, independent of input and prefix.
    struct TableModel {
        vocab: usize,
        logprobs: Vec<f64>,
    }

    impl SeqModel for TableModel {
        type State = ();
        fn vocab_size(&self) -> usize {
            self.vocab
        }
        fn start(&self, _x: &Sequence) -> () {}
        fn step(&self, _s: &(), _prev: Option<TokenId>) -> (Vec<f64>, ()) {
            (self.logprobs.clone(), ())
        }
    }

    fn one_hot_model(vocab: usize, idx: usize) -> TableModel {
        let mut lp = vec![-1e9; vocab + 1];
        lp[idx] = 0.0;
        TableModel {
            vocab,
            logprobs: lp,
        }
    }

    #[test]
    fn immediate_eos_gives_empty_rollout() {
        let model = one_hot_model(3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = sample_rollout(&model, &Sequence::from(vec![0]), 10, &mut rng);
        assert!(r.tokens.is_empty());
        assert!(r.ended_with_eos);
        assert_eq!(r.per_step_logprobs.len(), 1);
    }

    #[test]
    fn deterministic_model_rollout_is_greedy_path_until_cap() {
        let model = one_hot_model(3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = sample_rollout(&model, &Sequence::from(vec![0]), 4, &mut rng);
        assert_eq!(r.tokens.tokens(), &[1, 1, 1, 1]);
        assert!(!r.ended_with_eos);
    }

    #[test]
    fn rollout_is_seed_deterministic() {
        let model = TableModel {
            vocab: 3,
            logprobs: vec![(0.25f64).ln(); 4],
        };
        let a = sample_rollout(
            &model,
            &Sequence::from(vec![0]),
            8,
            &mut ChaCha8Rng::seed_from_u64(5),
        );
        let b = sample_rollout(
            &model,
            &Sequence::from(vec![0]),
            8,
            &mut ChaCha8Rng::seed_from_u64(5),
        );
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.per_step_logprobs, b.per_step_logprobs);
    }

    #[test]
    fn empirical_frequencies_match_probabilities() {
        let p = [0.5, 0.3, 0.15, 0.05];
        let model = TableModel {
            vocab: 3,
            logprobs: p.iter().map(|v: &f64| v.ln()).collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let (lp, _) = model.step(&(), None);
            counts[sample_index(&lp, &mut rng)] += 1;
        }
        for (i, &pi) in p.iter().enumerate() {
            let se = (pi * (1.0 - pi) / n as f64).sqrt();
            let freq = counts[i] as f64 / n as f64;
            assert!(
                (freq - pi).abs() <= 3.0 * se,
                "token {i}: freq {freq} vs p {pi}"
            );
        }
    }

    #[test]
    fn zero_sampling_probability_is_teacher_forcing() {
        let model = one_hot_model(3, 2);
        let target = Sequence::from(vec![0, 1, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (lps, cond) = scheduled_prefix_pass(&model, &Sequence::from(vec![0]), &target, 0.0, &mut rng);
        assert_eq!(lps.len(), target.len() + 1);
        assert_eq!(cond, target.tokens());
    }

    #[test]
    fn full_sampling_conditions_on_model_tokens() {
        let model = one_hot_model(3, 2);
        let target = Sequence::from(vec![0, 1, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (lps, cond) = scheduled_prefix_pass(&model, &Sequence::from(vec![0]), &target, 1.0, &mut rng);
        assert_eq!(lps.len(), target.len() + 1);
        assert_eq!(cond, vec![2, 2, 2]);
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let s = Schedule {
            p_start: 0.0,
            p_end: 0.55,
            ramp_steps: 1000,
        };
        assert_eq!(sampling_probability(0, &s), 0.0);
        assert_eq!(sampling_probability(1000, &s), 0.55);
        assert_eq!(sampling_probability(2000, &s), 0.55);
        assert!((sampling_probability(500, &s) - 0.275).abs() < 1e-12);
    }
}
