//! Token sets and the advertisement tags derived from them.
//!
//! A node advertises a short tag summarizing its token set so that neighbors
//! can tell whether a connection would be productive. The default tag is a
//! seeded 64-bit digest; oracle mode carries the whole set instead, which
//! makes tag equality exactly set equality (no collisions).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::TokenId;

/// Sorted set of token ids held by a node.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenSet(BTreeSet<TokenId>);

impl TokenSet {
    pub fn new() -> Self {
        Self(BTreeSet::new())
    }

    /// Inserts a token; returns true if it was new.
    pub fn insert(&mut self, token: TokenId) -> bool {
        self.0.insert(token)
    }

    pub fn contains(&self, token: TokenId) -> bool {
        self.0.contains(&token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.0.iter().copied()
    }

    /// Tokens held by exactly one of the two sets, in ascending order.
    pub fn symmetric_difference(&self, other: &TokenSet) -> Vec<TokenId> {
        self.0.symmetric_difference(&other.0).copied().collect()
    }
}

impl FromIterator<TokenId> for TokenSet {
    fn from_iter<I: IntoIterator<Item = TokenId>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// How advertisement tags are computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HashMode {
    /// Seeded 64-bit digest of the token set.
    #[default]
    Seeded,
    /// Carry the full token set; equality is exact set equality.
    Oracle,
}

/// Advertisement tag: digest or exact set, depending on [`HashMode`].
///
/// Equal token sets always produce equal tags, so a tag mismatch guarantees
/// the sets differ. In `Seeded` mode a digest collision can hide a real
/// difference; `Oracle` mode rules that out.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Digest(u64),
    Exact(TokenSet),
}

impl Tag {
    pub fn for_tokens(tokens: &TokenSet, round: u64, seed: u64, mode: HashMode) -> Self {
        match mode {
            HashMode::Seeded => Tag::Digest(token_digest(tokens, round, seed)),
            HashMode::Oracle => Tag::Exact(tokens.clone()),
        }
    }

    /// Compact 64-bit form, used when logging.
    pub fn digest64(&self) -> u64 {
        match self {
            Tag::Digest(d) => *d,
            Tag::Exact(set) => token_digest(set, 0, 0),
        }
    }
}

/// SplitMix64 finalizer; the building block for all stable hashing here.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit digest of (token set, round, seed). Used for advertisement
/// tags; the round salt makes tags from different rounds incomparable.
pub fn token_digest(tokens: &TokenSet, round: u64, seed: u64) -> u64 {
    let mut h = mix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    h = mix64(h ^ round);
    for t in tokens.iter() {
        h = mix64(h ^ (u64::from(t)).wrapping_add(0x517c_c1b7_2722_0a95));
    }
    mix64(h ^ tokens.len() as u64)
}

/// Derives an independent sub-seed from a base seed and a salt, so that
/// retries and per-component generators never share a random stream.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    mix64(seed ^ mix64(salt.wrapping_add(0xa076_1d64_78bd_642f)))
}
