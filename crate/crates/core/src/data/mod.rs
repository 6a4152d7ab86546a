//! Interaction events, behavior sequences, ingestion and synthetic data.

mod io;
mod split;
pub mod synthetic;
mod triples;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{KastError, Result};

pub use io::{load_interactions, read_interactions, write_interactions, ColumnSchema};
pub use split::split_by_time;
pub use triples::{build_triples, Polarity, RelationRule, RelationSchema, Triple, TripleSet};

/// One logged interaction. `item_id` indexes the item vocabulary `[0, M)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub user_id: usize,
    pub item_id: usize,
    pub timestamp: u64,
    pub label: u8,
    pub attrs: BTreeMap<String, u32>,
}

impl InteractionEvent {
    pub fn new(user_id: usize, item_id: usize, timestamp: u64, label: u8) -> Self {
        Self {
            user_id,
            item_id,
            timestamp,
            label,
            attrs: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, key: &str, value: u32) -> Self {
        self.attrs.insert(key.to_string(), value);
        self
    }
}

/// A user's events in non-decreasing timestamp order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorSequence {
    pub user_id: usize,
    pub events: Vec<InteractionEvent>,
}

impl BehaviorSequence {
    /// Validates ordering and user ownership.
    pub fn new(user_id: usize, events: Vec<InteractionEvent>) -> Result<Self> {
        if let Some(e) = events.iter().find(|e| e.user_id != user_id) {
            return Err(KastError::InvalidData(format!(
                "event of user {} in sequence of user {user_id}",
                e.user_id
            )));
        }
        if events.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
            return Err(KastError::InvalidData(format!(
                "events of user {user_id} are not sorted by timestamp"
            )));
        }
        Ok(Self { user_id, events })
    }

    /// Sorts by timestamp, keeping the given order for ties.
    pub fn from_unsorted(user_id: usize, mut events: Vec<InteractionEvent>) -> Result<Self> {
        events.sort_by_key(|e| e.timestamp);
        Self::new(user_id, events)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Vocabulary sizes observed in (or declared for) a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub n_users: usize,
    pub n_items: usize,
    /// Attribute name → number of distinct ids (max id + 1).
    pub attrs: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = &'a BehaviorSequence>) -> Self {
        let mut v = Vocab {
            n_users: 0,
            n_items: 0,
            attrs: BTreeMap::new(),
        };
        for s in seqs {
            v.n_users = v.n_users.max(s.user_id + 1);
            for e in &s.events {
                v.n_items = v.n_items.max(e.item_id + 1);
                for (k, &a) in &e.attrs {
                    let n = v.attrs.entry(k.clone()).or_insert(0);
                    *n = (*n).max(a as usize + 1);
                }
            }
        }
        v
    }

    pub fn merge(&self, other: &Vocab) -> Vocab {
        let mut attrs = self.attrs.clone();
        for (k, &n) in &other.attrs {
            let e = attrs.entry(k.clone()).or_insert(0);
            *e = (*e).max(n);
        }
        Vocab {
            n_users: self.n_users.max(other.n_users),
            n_items: self.n_items.max(other.n_items),
            attrs,
        }
    }
}

/// Unified entity index space: users `[0, U)`, items `[U, U+M)`, then one
/// contiguous block per attribute in name order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpace {
    pub n_users: usize,
    pub n_items: usize,
    attr_blocks: Vec<(String, usize, usize)>,
    total: usize,
}

impl EntitySpace {
    pub fn new(vocab: &Vocab) -> Self {
        let mut offset = vocab.n_users + vocab.n_items;
        let mut attr_blocks = Vec::new();
        for (name, &count) in &vocab.attrs {
            attr_blocks.push((name.clone(), offset, count));
            offset += count;
        }
        Self {
            n_users: vocab.n_users,
            n_items: vocab.n_items,
            attr_blocks,
            total: offset,
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn user(&self, user: usize) -> Result<usize> {
        if user < self.n_users {
            Ok(user)
        } else {
            Err(KastError::UnknownId(format!("user {user}")))
        }
    }

    pub fn item(&self, item: usize) -> Result<usize> {
        if item < self.n_items {
            Ok(self.n_users + item)
        } else {
            Err(KastError::UnknownId(format!("item {item}")))
        }
    }

    pub fn item_unchecked(&self, item: usize) -> usize {
        self.n_users + item
    }

    pub fn attr(&self, name: &str, value: u32) -> Result<usize> {
        let (_, off, count) = self
            .attr_blocks
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| KastError::UnknownId(format!("attribute `{name}`")))?;
        if (value as usize) < *count {
            Ok(off + value as usize)
        } else {
            Err(KastError::UnknownId(format!("{name} value {value}")))
        }
    }

    pub fn attr_names(&self) -> impl Iterator<Item = &str> {
        self.attr_blocks.iter().map(|(n, _, _)| n.as_str())
    }
}
