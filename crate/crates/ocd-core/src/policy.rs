//! Training targets derived from Q-value rows: the soft optimal policy, its
//! hard-target limit, and single-target selection strategies.

use alloc::vec::Vec;
use core::fmt;

use crate::qvalues::QRow;
use crate::seq::{Extension, Sequence, TokenId};

/// Per-step supervision: either a dense distribution over `vocab ∪ {eos}` or
/// a non-empty set of equally-weighted extensions.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyTarget {
    Soft(Vec<f64>),
    Hard(Vec<Extension>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyError {
    /// Temperature must be strictly positive for the soft policy.
    NonPositiveTau(f64),
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyError::NonPositiveTau(t) => write!(f, "temperature must be > 0, got {t}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PolicyError {}

/// Softmax of `Q / tau` over `vocab ∪ {eos}`, computed with max subtraction.
pub fn soft_policy(row: &QRow, tau: f64, vocab_size: usize) -> Result<Vec<f64>, PolicyError> {
    if !(tau > 0.0) {
        return Err(PolicyError::NonPositiveTau(tau));
    }
    let q = row.dense_q(vocab_size);
    let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = q.iter().map(|&v| libm::exp((v - max) / tau)).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    Ok(probs)
}

/// The optimal-extension set: the `tau → 0` limit of [`soft_policy`].
pub fn hard_targets(row: &QRow) -> Vec<Extension> {
    row.optimal.clone()
}

/// Secondary criterion for picking a single target out of the optimal set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OctStrategy {
    /// Minimize the total length of the induced completion.
    Shortest,
    /// Match the word count of the reference as closely as possible.
    SameWords { space: TokenId },
}

fn word_count(tokens: &[TokenId], space: TokenId) -> usize {
    if tokens.is_empty() {
        0
    } else {
        tokens.iter().filter(|&&t| t == space).count() + 1
    }
}

/// Select one extension among the optimal set for the hypothesis prefix whose
/// distance row is `dist_row` (`dist_row[j]` = edit distance of the prefix vs
/// `reference[..j]`, length `|reference| + 1`).
///
/// Every candidate corresponds to an argmin index `j`: extending with
/// `reference[j]` commits to the completion `reference[j..]`, and `j =
/// |reference|` stands for eos (stop here). Ties are broken toward larger `j`,
/// then smaller token id, so selection is deterministic.
pub fn oct_select(
    hyp_prefix: &Sequence,
    reference: &Sequence,
    dist_row: &[u32],
    strategy: OctStrategy,
) -> Extension {
    let n = reference.len();
    debug_assert_eq!(dist_row.len(), n + 1);
    let m = *dist_row.iter().min().expect("non-empty distance row");

    // Candidates in increasing j; j == n is the eos candidate.
    let candidates: Vec<usize> = (0..=n).filter(|&j| dist_row[j] == m).collect();

    match strategy {
        OctStrategy::Shortest => {
            // Completion length is |prefix| + (n - j), strictly decreasing in
            // j, so the largest argmin j wins and eos beats everything.
            let j = *candidates.last().unwrap();
            if j == n {
                Extension::Eos
            } else {
                Extension::Token(reference[j])
            }
        }
        OctStrategy::SameWords { space } => {
            let target_words = word_count(reference.tokens(), space);
            let mut best: Option<(usize, usize, Option<TokenId>)> = None;
            for &j in &candidates {
                let completion: Vec<TokenId> = hyp_prefix
                    .tokens()
                    .iter()
                    .chain(reference.tokens()[j..].iter())
                    .cloned()
                    .collect();
                let diff = word_count(&completion, space).abs_diff(target_words);
                let token = if j == n { None } else { Some(reference[j]) };
                let better = match &best {
                    None => true,
                    Some((bd, bj, bt)) => {
                        diff < *bd
                            || (diff == *bd && j > *bj)
                            || (diff == *bd
                                && j == *bj
                                && match (token, bt) {
                                    (Some(t), Some(b)) => t < *b,
                                    _ => false,
                                })
                    }
                };
                if better {
                    best = Some((diff, j, token));
                }
            }
            match best.unwrap() {
                (_, _, Some(t)) => Extension::Token(t),
                (_, _, None) => Extension::Eos,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit::prefix_distance_table;
    use crate::qvalues::q_values;
    use crate::testutil::seq;
    use alloc::vec;

    #[test]
    fn soft_policy_matches_direct_evaluation() {
        let row = QRow {
            m: 0,
            optimal: vec![Extension::Token(0)],
        };
        // Q = [0, -1, -1] over 2 tokens + eos.
        let p = soft_policy(&row, 1.0, 2).unwrap();
        let e = libm::exp(-1.0);
        let z = 1.0 + 2.0 * e;
        assert!((p[0] - 1.0 / z).abs() < 1e-12);
        assert!((p[1] - e / z).abs() < 1e-12);
        assert!((p[0] - 0.5761).abs() < 5e-5);
        assert!((p[1] - 0.2119).abs() < 5e-5);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_tau_is_one_hot() {
        let row = QRow {
            m: 0,
            optimal: vec![Extension::Token(0)],
        };
        let p = soft_policy(&row, 0.001, 2).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-9);
        assert!(p[1] < 1e-9 && p[2] < 1e-9);
    }

    #[test]
    fn ties_split_evenly_in_the_limit() {
        let row = QRow {
            m: 2,
            optimal: vec![Extension::Token(0), Extension::Token(1)],
        };
        let p = soft_policy(&row, 1e-4, 2).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-9);
        assert!((p[1] - 0.5).abs() < 1e-9);
        assert!(p[2] < 1e-9);
    }

    #[test]
    fn rejects_non_positive_tau() {
        let row = QRow {
            m: 0,
            optimal: vec![Extension::Eos],
        };
        assert!(soft_policy(&row, 0.0, 1).is_err());
        assert!(soft_policy(&row, -1.0, 1).is_err());
    }

    #[test]
    fn hard_targets_for_sa_prefix() {
        let t = q_values(&seq("SATURDAY"), &seq("SUNDAY"));
        let got = hard_targets(&t.rows[2]);
        assert_eq!(
            got,
            vec![Extension::Token('N' as u32), Extension::Token('U' as u32)]
        );
    }

    #[test]
    fn hard_targets_wife_example() {
        let t = q_values(&seq("as_e"), &seq("as_he_talks_his_wife"));
        let got = hard_targets(t.rows.last().unwrap());
        assert_eq!(
            got,
            vec![
                Extension::Token('_' as u32),
                Extension::Token('e' as u32),
                Extension::Token('h' as u32),
            ]
        );
    }

    #[test]
    fn shortest_picks_later_suffix() {
        // Prefix "SA" vs "SUNDAY": optimal {U (j=1), N (j=2)}; NDAY is the
        // shorter completion.
        let table = prefix_distance_table(&seq("SATURDAY"), &seq("SUNDAY"));
        let got = oct_select(
            &seq("SA"),
            &seq("SUNDAY"),
            table.row(2),
            OctStrategy::Shortest,
        );
        assert_eq!(got, Extension::Token('N' as u32));
    }

    #[test]
    fn correct_prefix_yields_next_reference_token() {
        let reference = seq("SUNDAY");
        let table = prefix_distance_table(&seq("SUN"), &reference);
        for strat in [
            OctStrategy::Shortest,
            OctStrategy::SameWords { space: ' ' as u32 },
        ] {
            let got = oct_select(&seq("SUN"), &reference, table.row(3), strat);
            assert_eq!(got, Extension::Token('D' as u32));
        }
    }

    #[test]
    fn same_words_matches_reference_word_count() {
        // Reference "AB CD" (2 words), prefix "AB". Optimal candidates from
        // the distance row include the space (j=2, completion "AB CD", 2
        // words) and eos-free later suffixes; the 2-word completion must win
        // over completing to a single word.
        let reference = seq("AB CD");
        let prefix = seq("AB");
        let table = prefix_distance_table(&prefix, &reference);
        let got = oct_select(
            &prefix,
            &reference,
            table.row(2),
            OctStrategy::SameWords { space: ' ' as u32 },
        );
        assert_eq!(got, Extension::Token(' ' as u32));
    }
}
