//! Knowledge graph types, loading and indexing.
//!
//! Every query is answered tail-side. A head query `(?, r, t)` is stored as
//! `(t, r_inv, ?)`, where `r_inv = r + |original relations|`.

mod dataset;
mod graph;
mod io;
mod vocab;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, Split, TEST_FILE, TRAIN_FILE, VALID_FILE};
pub use graph::KnowledgeGraph;
pub use io::{load_triples, read_names, write_names};
pub use vocab::{Vocabulary, ENTITIES_FILE, INVERSE_SUFFIX, RELATIONS_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// A fact `(head, relation, tail)`. Serialized as `[h, r, t]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 3]", into = "[u32; 3]")]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl From<[u32; 3]> for Triple {
    fn from([h, r, t]: [u32; 3]) -> Self {
        Triple::new(h, r, t)
    }
}

impl From<Triple> for [u32; 3] {
    fn from(t: Triple) -> Self {
        [t.head.0, t.relation.0, t.tail.0]
    }
}

impl Triple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Triple {
            head: EntityId(head),
            relation: RelationId(relation),
            tail: EntityId(tail),
        }
    }

    /// The same fact read backwards, `(t, r_inv, h)`. Applying it twice
    /// returns the original triple.
    pub fn inverse(&self, num_original_relations: u32) -> Triple {
        Triple {
            head: self.tail,
            relation: invert_relation(self.relation, num_original_relations),
            tail: self.head,
        }
    }
}

/// Maps `r` to `r_inv` and `r_inv` back to `r`.
pub fn invert_relation(r: RelationId, num_original_relations: u32) -> RelationId {
    if r.0 < num_original_relations {
        RelationId(r.0 + num_original_relations)
    } else {
        RelationId(r.0 - num_original_relations)
    }
}

/// Appends `(t, r_inv, h)` for every input triple; originals keep their order
/// and come first.
pub fn augment_inverses(triples: &[Triple], num_original_relations: u32) -> Vec<Triple> {
    let mut out = Vec::with_capacity(triples.len() * 2);
    out.extend_from_slice(triples);
    out.extend(triples.iter().map(|t| t.inverse(num_original_relations)));
    out
}

/// A link prediction query `(source, relation, ?)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub source: EntityId,
    pub relation: RelationId,
    /// Absent at pure inference.
    pub target: Option<EntityId>,
}

impl Query {
    pub fn new(source: EntityId, relation: RelationId) -> Self {
        Query {
            source,
            relation,
            target: None,
        }
    }

    pub fn from_triple(t: &Triple) -> Self {
        Query {
            source: t.head,
            relation: t.relation,
            target: Some(t.tail),
        }
    }

    /// The gold triple, if the target is known.
    pub fn triple(&self) -> Option<Triple> {
        self.target.map(|tail| Triple {
            head: self.source,
            relation: self.relation,
            tail,
        })
    }
}

/// Both evaluation directions of every triple: `(h, r, t)` and `(t, r_inv, h)`.
pub fn queries_both_directions(triples: &[Triple], num_original_relations: u32) -> Vec<Query> {
    let mut out = Vec::with_capacity(triples.len() * 2);
    for t in triples {
        out.push(Query::from_triple(t));
        out.push(Query::from_triple(&t.inverse(num_original_relations)));
    }
    out
}
