use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BehaviorSequence, EntitySpace};
use crate::error::{KastError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

/// A `(head, relation, tail)` fact over the unified entity space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    pub polarity: Polarity,
}

impl Triple {
    pub fn positive(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
            polarity: Polarity::Positive,
        }
    }

    pub fn with_tail(self, tail: usize) -> Self {
        Self {
            tail,
            polarity: Polarity::Negative,
            ..self
        }
    }

    pub fn with_head(self, head: usize) -> Self {
        Self {
            head,
            polarity: Polarity::Negative,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationRule {
    /// user → clicked item
    UserClicksItem,
    /// item → value of the named attribute
    ItemAttr(String),
}

impl fmt::Display for RelationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationRule::UserClicksItem => f.write_str("clicks"),
            RelationRule::ItemAttr(a) => f.write_str(a),
        }
    }
}

/// Relation id `r` is the index of its rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    pub rules: Vec<RelationRule>,
}

impl RelationSchema {
    pub fn new(rules: Vec<RelationRule>) -> Self {
        Self { rules }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn attr_names(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().filter_map(|r| match r {
            RelationRule::ItemAttr(a) => Some(a.as_str()),
            RelationRule::UserClicksItem => None,
        })
    }
}

impl fmt::Display for RelationSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.rules.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for RelationSchema {
    type Err = KastError;

    /// Comma-separated list; `clicks` is the user→item rule, any other name
    /// is an item→attribute rule.
    fn from_str(s: &str) -> Result<Self> {
        let rules: Vec<RelationRule> = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| match p {
                "clicks" => RelationRule::UserClicksItem,
                a => RelationRule::ItemAttr(a.to_string()),
            })
            .collect();
        if rules.is_empty() {
            return Err(KastError::Config("relation schema is empty".into()));
        }
        Ok(Self { rules })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleSet {
    pub triples: Vec<Triple>,
    /// Events lacking an attribute some rule needed.
    pub skipped: usize,
}

/// Positive facts from clicked (`label == 1`) events, deduplicated and sorted.
pub fn build_triples(seqs: &[BehaviorSequence], schema: &RelationSchema, space: &EntitySpace) -> Result<TripleSet> {
    let mut set = BTreeSet::new();
    let mut skipped = 0;
    for s in seqs {
        for e in s.events.iter().filter(|e| e.label == 1) {
            let item = space.item(e.item_id)?;
            for (r, rule) in schema.rules.iter().enumerate() {
                match rule {
                    RelationRule::UserClicksItem => {
                        set.insert(Triple::positive(space.user(e.user_id)?, r, item));
                    }
                    RelationRule::ItemAttr(name) => match e.attrs.get(name) {
                        Some(&v) => {
                            set.insert(Triple::positive(item, r, space.attr(name, v)?));
                        }
                        None => skipped += 1,
                    },
                }
            }
        }
    }
    Ok(TripleSet {
        triples: set.into_iter().collect(),
        skipped,
    })
}
