//! Token sequences and the extension alphabet `vocab ∪ {eos}`.

use alloc::vec::Vec;
use core::fmt;

/// Index into a closed vocabulary. The end-of-sequence marker is *not* a
/// `TokenId`; it is represented by [`Extension::Eos`].
pub type TokenId = u32;

/// A finite list of vocabulary tokens. End-of-sequence is implicit: a
/// `Sequence` never stores an eos token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Sequence(Vec<TokenId>);

impl Sequence {
    pub fn new(tokens: Vec<TokenId>) -> Self {
        Sequence(tokens)
    }

    pub fn empty() -> Self {
        Sequence(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.0
    }

    pub fn push(&mut self, t: TokenId) {
        self.0.push(t);
    }

    /// The prefix holding the first `n` tokens.
    pub fn prefix(&self, n: usize) -> Sequence {
        Sequence(self.0[..n].to_vec())
    }

    /// `self ⊕ ext ⊕ tail`, with `Eos` contributing nothing.
    pub fn concat(&self, ext: Extension, tail: &[TokenId]) -> Sequence {
        let mut out = self.0.clone();
        if let Extension::Token(t) = ext {
            out.push(t);
        }
        out.extend_from_slice(tail);
        Sequence(out)
    }
}

impl From<Vec<TokenId>> for Sequence {
    fn from(tokens: Vec<TokenId>) -> Self {
        Sequence(tokens)
    }
}

impl From<&[TokenId]> for Sequence {
    fn from(tokens: &[TokenId]) -> Self {
        Sequence(tokens.to_vec())
    }
}

impl core::ops::Index<usize> for Sequence {
    type Output = TokenId;
    fn index(&self, i: usize) -> &TokenId {
        &self.0[i]
    }
}

impl<'a> IntoIterator for &'a Sequence {
    type Item = &'a TokenId;
    type IntoIter = core::slice::Iter<'a, TokenId>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// A candidate next step for a prefix: either a vocabulary token or the
/// end-of-sequence marker.
///
/// Ordered with all tokens (by id) before `Eos`, which gives deterministic
/// iteration order for optimal-extension sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Extension {
    Token(TokenId),
    Eos,
}

impl Extension {
    /// Dense index in a `vocab_size + 1` output vector, eos last.
    pub fn dense_index(self, vocab_size: usize) -> usize {
        match self {
            Extension::Token(t) => t as usize,
            Extension::Eos => vocab_size,
        }
    }

    /// Inverse of [`Extension::dense_index`].
    pub fn from_dense_index(i: usize, vocab_size: usize) -> Self {
        if i == vocab_size {
            Extension::Eos
        } else {
            Extension::Token(i as TokenId)
        }
    }
}

impl fmt::Display for Extension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extension::Token(t) => write!(f, "{t}"),
            Extension::Eos => write!(f, "</s>"),
        }
    }
}
