//! Domain types shared by every pipeline stage.
//!
//! Items and tokens are dense integers internally; raw dataset strings live
//! only at the ingest boundary. All types here are immutable after
//! construction and safe to share across threads.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Dense item index in `[0, |V|)`, reindexed from raw dataset strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemId(pub u32);

impl ItemId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bijective mapping between raw item strings and dense [`ItemId`]s.
#[derive(Debug, Clone, Default)]
pub struct ItemVocab {
    raw_to_id: HashMap<String, ItemId>,
    id_to_raw: Vec<String>,
}

impl ItemVocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Intern a raw item string, returning its dense id.
    pub fn intern(&mut self, raw: &str) -> ItemId {
        if let Some(&id) = self.raw_to_id.get(raw) {
            return id;
        }
        let id = ItemId(self.id_to_raw.len() as u32);
        self.id_to_raw.push(raw.to_string());
        self.raw_to_id.insert(raw.to_string(), id);
        id
    }

    pub fn id_of(&self, raw: &str) -> Option<ItemId> {
        self.raw_to_id.get(raw).copied()
    }

    pub fn raw_of(&self, id: ItemId) -> &str {
        &self.id_to_raw[id.index()]
    }

    pub fn len(&self) -> usize {
        self.id_to_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_raw.is_empty()
    }
}

/// One user's chronologically ordered interaction history.
#[derive(Debug, Clone)]
pub struct InteractionSequence {
    /// Opaque user key from the raw dataset.
    pub user: String,
    pub items: Vec<ItemId>,
    /// Parallel to `items` when present.
    pub timestamps: Option<Vec<i64>>,
}

impl InteractionSequence {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Fixed-length tuple of small-integer tokens identifying one item facet.
///
/// The last token is the conflict digit; ordering is lexicographic over the
/// token tuple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SemanticId {
    tokens: Vec<u32>,
}

impl SemanticId {
    pub fn new(tokens: Vec<u32>) -> Self {
        Self { tokens }
    }

    /// Content digits followed by the conflict digit.
    pub fn from_parts(content: &[u32], conflict: u32) -> Self {
        let mut tokens = Vec::with_capacity(content.len() + 1);
        tokens.extend_from_slice(content);
        tokens.push(conflict);
        Self { tokens }
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The first `G - 1` digits carrying quantized content.
    pub fn content_digits(&self) -> &[u32] {
        &self.tokens[..self.tokens.len() - 1]
    }

    /// The final disambiguation digit.
    pub fn conflict_digit(&self) -> u32 {
        *self.tokens.last().expect("semantic id is never empty")
    }
}

impl fmt::Display for SemanticId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.tokens.iter().map(|t| t.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// One (sequence, index) slot in the training data: an item interacted with
/// by a specific user at a specific position. Positions are 1-based, matching
/// the prefix `[v_1 .. v_i]` convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Occurrence {
    /// Index of the sequence within its log.
    pub seq: usize,
    /// 1-based position within the sequence.
    pub position: usize,
}

impl Occurrence {
    pub fn new(seq: usize, position: usize) -> Self {
        debug_assert!(position >= 1);
        Self { seq, position }
    }
}

/// Parse a `user:position` occurrence key from an external embedding file.
pub fn parse_occurrence_key(key: &str) -> Result<(&str, usize)> {
    let (user, pos) = key
        .rsplit_once(':')
        .ok_or_else(|| Error::Format(format!("occurrence key '{key}' is not 'user:position'")))?;
    let position: usize = pos
        .parse()
        .map_err(|_| Error::Format(format!("occurrence key '{key}' has non-integer position")))?;
    if position == 0 {
        return Err(Error::Format(format!(
            "occurrence key '{key}' has position 0; positions are 1-based"
        )));
    }
    Ok((user, position))
}
