use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::kg::{augment_inverses, EntityId, RelationId, Triple, Vocabulary};

/// Immutable, indexed training graph plus the all-split fact set used for
/// filtered evaluation.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    num_entities: usize,
    num_original_relations: u32,
    triples: Vec<Triple>,
    train_set: HashSet<Triple>,
    out_adjacency: Vec<Vec<(RelationId, EntityId)>>,
    known_tails: HashMap<(EntityId, RelationId), Vec<EntityId>>,
}

impl KnowledgeGraph {
    /// `augmented_train` must already contain inverses (see
    /// [`augment_inverses`]); `all_facts` holds the original-direction
    /// triples of every split and gains inverses here.
    pub fn build(
        augmented_train: Vec<Triple>,
        all_facts: &[Triple],
        num_entities: usize,
        num_original_relations: usize,
    ) -> Result<Self> {
        let num_relations = 2 * num_original_relations;
        let check = |t: &Triple| -> Result<()> {
            if t.head.index() >= num_entities || t.tail.index() >= num_entities {
                return Err(Error::Graph(format!(
                    "triple {t:?} references an entity outside 0..{num_entities}"
                )));
            }
            if t.relation.index() >= num_relations {
                return Err(Error::Graph(format!(
                    "triple {t:?} references a relation outside 0..{num_relations}"
                )));
            }
            Ok(())
        };
        let mut out_adjacency = vec![Vec::new(); num_entities];
        let mut train_set = HashSet::with_capacity(augmented_train.len());
        for t in &augmented_train {
            check(t)?;
            out_adjacency[t.head.index()].push((t.relation, t.tail));
            train_set.insert(*t);
        }
        let n = num_original_relations as u32;
        let mut known: HashMap<(EntityId, RelationId), HashSet<EntityId>> = HashMap::new();
        for t in all_facts.iter().chain(augmented_train.iter()) {
            check(t)?;
            for f in [*t, t.inverse(n)] {
                known.entry((f.head, f.relation)).or_default().insert(f.tail);
            }
        }
        let known_tails = known
            .into_iter()
            .map(|(k, v)| {
                let mut v: Vec<EntityId> = v.into_iter().collect();
                v.sort_unstable();
                (k, v)
            })
            .collect();
        Ok(KnowledgeGraph {
            num_entities,
            num_original_relations: n,
            triples: augmented_train,
            train_set,
            out_adjacency,
            known_tails,
        })
    }

    /// Builds from original-direction splits; augmentation happens here.
    pub fn from_splits(vocab: &Vocabulary, train: &[Triple], valid: &[Triple], test: &[Triple]) -> Result<Self> {
        let n = vocab.num_original_relations();
        let augmented = augment_inverses(train, n as u32);
        let all: Vec<Triple> = train.iter().chain(valid).chain(test).copied().collect();
        Self::build(augmented, &all, vocab.num_entities(), n)
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_original_relations(&self) -> u32 {
        self.num_original_relations
    }

    pub fn num_relations(&self) -> usize {
        2 * self.num_original_relations as usize
    }

    pub fn is_inverse(&self, r: RelationId) -> bool {
        r.0 >= self.num_original_relations
    }

    /// Augmented training triples, originals first.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// Outgoing `(relation, tail)` pairs of `e` in file order, originals
    /// before inverses.
    pub fn out_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        self.out_adjacency.get(e.index()).map_or(&[], Vec::as_slice)
    }

    /// Membership among augmented training triples.
    pub fn in_train(&self, t: &Triple) -> bool {
        self.train_set.contains(t)
    }

    /// Membership among every split's facts and their inverses.
    pub fn is_fact(&self, t: &Triple) -> bool {
        self.known_tails(t.head, t.relation).binary_search(&t.tail).is_ok()
    }

    /// Every known answer of `(source, relation, ?)` across all splits, sorted.
    pub fn known_tails(&self, source: EntityId, relation: RelationId) -> &[EntityId] {
        self.known_tails
            .get(&(source, relation))
            .map_or(&[], Vec::as_slice)
    }

    pub fn inverse(&self, t: &Triple) -> Triple {
        t.inverse(self.num_original_relations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::desk_kg;

    #[test]
    fn desk_adjacency_of_a() {
        let desk = desk_kg();
        let kg = &desk.graph;
        let a = desk.vocab.entity("a").unwrap();
        let names: Vec<(String, String)> = kg
            .out_edges(a)
            .iter()
            .map(|(r, t)| {
                (
                    desk.vocab.relation_name(*r).unwrap(),
                    desk.vocab.entity_name(*t).unwrap().to_string(),
                )
            })
            .collect();
        let expect = [("r1", "b"), ("r1", "d"), ("r3", "f")];
        assert_eq!(names.len(), 3);
        for (got, want) in names.iter().zip(expect) {
            assert_eq!((got.0.as_str(), got.1.as_str()), want);
        }
    }

    #[test]
    fn adjacency_is_a_bijection_with_augmented_triples() {
        let desk = desk_kg();
        let kg = &desk.graph;
        assert_eq!(kg.triples().len(), 16);
        let mut from_adj = Vec::new();
        for e in 0..kg.num_entities() as u32 {
            for &(r, t) in kg.out_edges(EntityId(e)) {
                from_adj.push(Triple {
                    head: EntityId(e),
                    relation: r,
                    tail: t,
                });
            }
        }
        let mut expected = kg.triples().to_vec();
        from_adj.sort();
        expected.sort();
        assert_eq!(from_adj, expected);
    }

    #[test]
    fn entity_without_out_edges_has_empty_adjacency() {
        let kg = KnowledgeGraph::build(vec![Triple::new(0, 0, 1)], &[], 3, 1).unwrap();
        assert!(kg.out_edges(EntityId(2)).is_empty());
        assert!(kg.out_edges(EntityId(1)).is_empty());
    }

    #[test]
    fn fact_set_covers_all_splits_and_inverses() {
        let test = [Triple::new(2, 0, 0)];
        let kg = KnowledgeGraph::build(augment_inverses(&[Triple::new(0, 0, 1)], 1), &test, 3, 1).unwrap();
        assert!(kg.is_fact(&Triple::new(2, 0, 0)));
        assert!(kg.is_fact(&Triple::new(0, 1, 2)));
        assert!(!kg.in_train(&Triple::new(2, 0, 0)));
        assert!(kg.is_fact(&Triple::new(1, 1, 0)));
    }

    #[test]
    fn out_of_range_indices_fail() {
        assert!(matches!(
            KnowledgeGraph::build(vec![Triple::new(0, 0, 5)], &[], 3, 1),
            Err(Error::Graph(_))
        ));
        assert!(matches!(
            KnowledgeGraph::build(vec![Triple::new(0, 2, 1)], &[], 3, 1),
            Err(Error::Graph(_))
        ));
    }
}
