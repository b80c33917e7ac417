//! Levenshtein distance with unit insert/delete/substitute costs.

use alloc::vec::Vec;

use crate::seq::Sequence;

/// Full prefix-to-prefix edit-distance table.
///
/// `rows[i][j]` is the edit distance between `hyp[..i]` and `ref[..j]`.
/// Kept for debugging and golden tests; the training path uses the rolling
/// one-row kernel in [`crate::qvalues`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceTable {
    rows: Vec<Vec<u32>>,
}

impl DistanceTable {
    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    /// Bottom-right cell: the edit distance between the full sequences.
    pub fn total(&self) -> u32 {
        *self.rows.last().unwrap().last().unwrap()
    }
}

/// Minimum number of edits converting `a` into `b`.
pub fn edit_distance(a: &Sequence, b: &Sequence) -> u32 {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut row: Vec<u32> = (0..=short.len() as u32).collect();
    for (i, &lt) in long.tokens().iter().enumerate() {
        let mut diag = row[0];
        row[0] = i as u32 + 1;
        for (j, &st) in short.tokens().iter().enumerate() {
            let sub = diag + u32::from(lt != st);
            diag = row[j + 1];
            row[j + 1] = sub.min(diag + 1).min(row[j] + 1);
        }
    }
    *row.last().unwrap()
}

/// Edit distances between every prefix of `hyp` and every prefix of `reference`.
pub fn prefix_distance_table(hyp: &Sequence, reference: &Sequence) -> DistanceTable {
    let n = reference.len();
    let mut rows = Vec::with_capacity(hyp.len() + 1);
    rows.push((0..=n as u32).collect::<Vec<_>>());
    for (i, &h) in hyp.tokens().iter().enumerate() {
        let prev = &rows[i];
        let mut row = Vec::with_capacity(n + 1);
        row.push(i as u32 + 1);
        for (j, &r) in reference.tokens().iter().enumerate() {
            let sub = prev[j] + u32::from(h != r);
            row.push(sub.min(prev[j + 1] + 1).min(row[j] + 1));
        }
        rows.push(row);
    }
    DistanceTable { rows }
}
