//! Exact optimal Q-values for every prefix of a hypothesis.
//!
//! For a hypothesis prefix `h[..i]` and reference `r`, the Q-value of
//! extending with token `a` is the negated minimum edit distance achievable
//! by completing `h[..i] ⊕ a` optimally. Only a suffix of the reference can
//! be an optimal completion, so each row of the table is fully described by
//! the row minimum `m` and the set of optimal extensions: optimal tokens
//! score `-m`, every other token scores `-m - 1`.
//!
//! The kernel keeps a single rolling row of the Levenshtein table, so working
//! memory is `O(|r|)` while time stays `O(|h|·|r|)`.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::seq::{Extension, Sequence};

/// One row of the Q-table: the state after consuming `i` hypothesis tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QRow {
    /// Minimum edit distance between the hypothesis prefix and any reference
    /// prefix; the best final edit distance still achievable.
    pub m: u32,
    /// Extensions with Q-value `-m`, sorted, deduplicated, never empty.
    pub optimal: Vec<Extension>,
}

impl QRow {
    /// Q-value of a single extension.
    pub fn q(&self, ext: Extension) -> i64 {
        if self.optimal.contains(&ext) {
            -(self.m as i64)
        } else {
            -(self.m as i64) - 1
        }
    }

    /// Materialize the dense Q vector over `vocab ∪ {eos}` (eos last).
    pub fn dense_q(&self, vocab_size: usize) -> Vec<f64> {
        let mut q = Vec::with_capacity(vocab_size + 1);
        q.resize(vocab_size + 1, -(self.m as f64) - 1.0);
        for &ext in &self.optimal {
            q[ext.dense_index(vocab_size)] = -(self.m as f64);
        }
        q
    }
}

/// Per-prefix optimal Q-values: `rows[i]` covers the hypothesis prefix of
/// length `i`, so there are `|hyp| + 1` rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QTable {
    pub rows: Vec<QRow>,
}

impl QTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn row_from_distances(dist: &[u32], reference: &Sequence) -> QRow {
    let n = reference.len();
    let m = *dist.iter().min().expect("distance row is non-empty");
    let mut optimal = BTreeSet::new();
    for j in 0..n {
        if dist[j] == m {
            optimal.insert(Extension::Token(reference[j]));
        }
    }
    // Extending by eos is optimal exactly when the full reference is among
    // the argmin prefixes.
    if dist[n] == m {
        optimal.insert(Extension::Eos);
    }
    QRow {
        m,
        optimal: optimal.into_iter().collect(),
    }
}

/// Optimal Q-values for every prefix of `hyp` against `reference`.
///
/// Neither sequence may contain an eos token; eos shows up only as an
/// [`Extension`] in the output. Uses a rolling one-row Levenshtein buffer.
pub fn q_values(hyp: &Sequence, reference: &Sequence) -> QTable {
    let n = reference.len();
    let mut dist: Vec<u32> = (0..=n as u32).collect();
    let mut rows = Vec::with_capacity(hyp.len() + 1);
    rows.push(row_from_distances(&dist, reference));
    for (i, &h) in hyp.tokens().iter().enumerate() {
        let mut diag = dist[0];
        dist[0] = i as u32 + 1;
        for (j, &r) in reference.tokens().iter().enumerate() {
            let sub = diag + u32::from(h != r);
            diag = dist[j + 1];
            dist[j + 1] = sub.min(diag + 1).min(dist[j] + 1);
        }
        rows.push(row_from_distances(&dist, reference));
    }
    QTable { rows }
}

/// Element-wise [`q_values`] over independent pairs.
pub fn q_values_batch(pairs: &[(Sequence, Sequence)]) -> Vec<QTable> {
    pairs.iter().map(|(h, r)| q_values(h, r)).collect()
}
