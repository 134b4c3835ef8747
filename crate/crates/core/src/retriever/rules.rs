use std::collections::{BTreeMap, HashMap};

use crate::kg::{KnowledgeGraph, Query, RelationId, Triple};
use crate::retriever::PathScorer;

/// Pseudo-count added to a relation pair's path total when weighting its
/// rules, so rarely seen pairs count for little.
const RULE_SMOOTHING: f64 = 5.0;

/// Composition rules `r1 . r2 -> q` read off two-hop paths
/// `h -r1-> x -r2-> t` parallel to a stored triple `(h, q, t)` that never
/// pass through either endpoint.
///
/// A rule's confidence is its path count over the pair's total count of
/// parallel paths plus a pseudo-count, so coincidental paths spread over
/// many relations weigh little. Sorted by rule.
pub fn composition_rules(kg: &KnowledgeGraph) -> Vec<([RelationId; 3], f64)> {
    let mut counts: BTreeMap<[RelationId; 3], usize> = BTreeMap::new();
    let mut totals: HashMap<[RelationId; 2], usize> = HashMap::new();
    for t in kg.triples() {
        for &(r1, x) in kg.out_edges(t.head) {
            if x == t.head || x == t.tail {
                continue;
            }
            for &(r2, y) in kg.out_edges(x) {
                if y == t.tail {
                    *counts.entry([r1, r2, t.relation]).or_default() += 1;
                    *totals.entry([r1, r2]).or_default() += 1;
                }
            }
        }
    }
    counts
        .into_iter()
        .map(|(rule, c)| {
            let total = totals[&[rule[0], rule[1]]] as f64;
            (rule, c as f64 / (total + RULE_SMOOTHING))
        })
        .collect()
}

/// Scores paths by the confidence of the two-hop composition rule their
/// first two relations instantiate for the query relation.
///
/// A one-edge path gets the best confidence among its possible
/// completions, so the first beam step keeps prefixes that can still
/// become a good rule. Hops past the second add nothing.
#[derive(Debug, Clone, Default)]
pub struct RuleScorer {
    pair: HashMap<[RelationId; 3], f64>,
    prefix: HashMap<[RelationId; 2], f64>,
}

impl RuleScorer {
    pub fn mine(kg: &KnowledgeGraph) -> Self {
        let mut s = RuleScorer::default();
        for ([r1, r2, q], w) in composition_rules(kg) {
            s.pair.insert([r1, r2, q], w);
            let best = s.prefix.entry([r1, q]).or_insert(0.0);
            *best = best.max(w);
        }
        s
    }

    pub fn confidence(&self, r1: RelationId, r2: RelationId, q: RelationId) -> f64 {
        self.pair.get(&[r1, r2, q]).copied().unwrap_or(0.0)
    }

    pub fn num_rules(&self) -> usize {
        self.pair.len()
    }
}

impl PathScorer for RuleScorer {
    fn score(&self, query: &Query, path: &[Triple]) -> f64 {
        match path {
            [] => 0.0,
            [a] => self.prefix.get(&[a.relation, query.relation]).copied().unwrap_or(0.0),
            [a, b, ..] => self.confidence(a.relation, b.relation, query.relation),
        }
    }
}
