//! Greedy and width-limited beam search over `vocab ∪ {eos}`.

use ocd_core::seq::{Sequence, TokenId};

use crate::model::SeqModel;

/// A (partial or finished) decode with its accumulated log-probability.
#[derive(Debug, Clone)]
pub struct BeamHypothesis {
    pub tokens: Sequence,
    pub logprob: f64,
    pub finished: bool,
}

struct Candidate<S> {
    tokens: Vec<TokenId>,
    logprob: f64,
    state: S,
    prev: Option<TokenId>,
}

/// Beam search without length normalization. Finished hypotheses retire into
/// a pool; the result is the highest-scoring hypothesis across the pool and
/// whatever remains on the frontier at the length cap. Score ties break
/// toward lexicographically smaller token sequences.
pub fn beam_search<M: SeqModel>(
    model: &M,
    x: &Sequence,
    beam: usize,
    max_len: usize,
) -> BeamHypothesis {
    assert!(beam >= 1 && max_len >= 1);
    let vocab = model.vocab_size();
    let start = model.start(x);
    let mut frontier = vec![Candidate {
        tokens: Vec::new(),
        logprob: 0.0,
        state: start,
        prev: None,
    }];
    let mut pool: Vec<BeamHypothesis> = Vec::new();

    for _ in 0..max_len {
        let mut expansions: Vec<Candidate<M::State>> = Vec::new();
        for cand in &frontier {
            let (logprobs, next_state) = model.step(&cand.state, cand.prev);
            debug_assert_eq!(logprobs.len(), vocab + 1);
            for (idx, &lp) in logprobs.iter().enumerate() {
                let score = cand.logprob + lp;
                if idx == vocab {
                    pool.push(BeamHypothesis {
                        tokens: Sequence::new(cand.tokens.clone()),
                        logprob: score,
                        finished: true,
                    });
                } else {
                    let mut tokens = cand.tokens.clone();
                    tokens.push(idx as TokenId);
                    expansions.push(Candidate {
                        tokens,
                        logprob: score,
                        state: next_state.clone(),
                        prev: Some(idx as TokenId),
                    });
                }
            }
        }
        expansions.sort_by(|a, b| {
            b.logprob
                .partial_cmp(&a.logprob)
                .unwrap()
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        expansions.truncate(beam);
        frontier = expansions;
        if frontier.is_empty() {
            break;
        }
    }

    pool.extend(frontier.into_iter().map(|c| BeamHypothesis {
        tokens: Sequence::new(c.tokens),
        logprob: c.logprob,
        finished: false,
    }));
    pool.into_iter()
        .min_by(|a, b| {
            b.logprob
                .partial_cmp(&a.logprob)
                .unwrap()
                .then_with(|| a.tokens.tokens().cmp(b.tokens.tokens()))
        })
        .expect("frontier and pool cannot both be empty")
}

/// Argmax token each step until eos or the cap; identical to beam width 1.
pub fn greedy_decode<M: SeqModel>(model: &M, x: &Sequence, max_len: usize) -> BeamHypothesis {
    beam_search(model, x, 1, max_len)
}
