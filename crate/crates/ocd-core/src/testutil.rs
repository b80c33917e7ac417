//! Unit-test helpers.

use crate::seq::Sequence;

/// Build a sequence from a string, one token per char (token id = codepoint).
pub fn seq(s: &str) -> Sequence {
    Sequence::new(s.chars().map(|c| c as u32).collect())
}
