//! Character and word error rates, plus the prefix-mismatch diagnostic.

use alloc::vec::Vec;

use crate::edit::edit_distance;
use crate::seq::{Sequence, TokenId};

/// Sentence-level character (token) error rate: edits / |ref|.
///
/// An empty reference with a non-empty hypothesis has no natural denominator;
/// it is scored as `|hyp| / 1` (callers flag this in output).
pub fn cer(hyp: &Sequence, reference: &Sequence) -> f64 {
    let edits = edit_distance(hyp, reference);
    if reference.is_empty() {
        edits as f64
    } else {
        edits as f64 / reference.len() as f64
    }
}

fn words(seq: &Sequence, space: TokenId) -> Vec<Sequence> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for &t in seq.tokens() {
        if t == space {
            out.push(Sequence::new(core::mem::take(&mut cur)));
        } else {
            cur.push(t);
        }
    }
    out.push(Sequence::new(cur));
    out
}

fn word_edit_distance(hyp: &[Sequence], reference: &[Sequence]) -> u32 {
    let mut row: Vec<u32> = (0..=reference.len() as u32).collect();
    for (i, h) in hyp.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i as u32 + 1;
        for (j, r) in reference.iter().enumerate() {
            let sub = diag + u32::from(h != r);
            diag = row[j + 1];
            row[j + 1] = sub.min(diag + 1).min(row[j] + 1);
        }
    }
    *row.last().unwrap()
}

/// Word error rate with words delimited by `space`.
pub fn wer(hyp: &Sequence, reference: &Sequence, space: TokenId) -> f64 {
    let h = words(hyp, space);
    let r = words(reference, space);
    word_edit_distance(&h, &r) as f64 / r.len() as f64
}

/// Fraction of positions where the rollout differs from the target, over the
/// longer length; positions past the shorter sequence count as mismatches.
pub fn prefix_mismatch(rollout: &Sequence, target: &Sequence) -> f64 {
    let max = rollout.len().max(target.len());
    if max == 0 {
        return 0.0;
    }
    let min = rollout.len().min(target.len());
    let mismatched = rollout
        .tokens()
        .iter()
        .zip(target.tokens())
        .filter(|(a, b)| a != b)
        .count()
        + (max - min);
    mismatched as f64 / max as f64
}

/// Corpus-level accumulator: sums edit counts and reference lengths so the
/// reported rates are `Σ edits / Σ |ref|`, matching standard ASR reporting.
#[derive(Debug, Clone, Default)]
pub struct CorpusMetrics {
    char_edits: u64,
    char_refs: u64,
    word_edits: u64,
    word_refs: u64,
    pub n_examples: usize,
    /// Set when an empty reference was scored against a non-empty hypothesis.
    pub empty_reference_seen: bool,
}

impl CorpusMetrics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, hyp: &Sequence, reference: &Sequence, space: Option<TokenId>) {
        self.char_edits += u64::from(edit_distance(hyp, reference));
        if reference.is_empty() && !hyp.is_empty() {
            self.empty_reference_seen = true;
            self.char_refs += 1;
        } else {
            self.char_refs += reference.len() as u64;
        }
        if let Some(space) = space {
            let h = words(hyp, space);
            let r = words(reference, space);
            self.word_edits += u64::from(word_edit_distance(&h, &r));
            self.word_refs += r.len() as u64;
        }
        self.n_examples += 1;
    }

    pub fn cer(&self) -> f64 {
        if self.char_refs == 0 {
            0.0
        } else {
            self.char_edits as f64 / self.char_refs as f64
        }
    }

    pub fn wer(&self) -> f64 {
        if self.word_refs == 0 {
            0.0
        } else {
            self.word_edits as f64 / self.word_refs as f64
        }
    }
}
