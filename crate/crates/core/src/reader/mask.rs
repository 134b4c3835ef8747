use std::sync::Arc;

use crate::numerics::AllowMask;
use crate::reader::TokenSequence;

/// Square boolean attention structure, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    size: usize,
    allow: AllowMask,
}

impl AttentionMask {
    pub fn full(size: usize) -> Self {
        AttentionMask {
            size,
            allow: vec![true; size * size].into(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.allow[i * self.size + j]
    }

    pub fn allowed_count(&self) -> usize {
        self.allow.iter().filter(|&&a| a).count()
    }

    pub fn as_allow(&self) -> &AllowMask {
        &self.allow
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|i| (0..self.size).all(|j| self.allows(i, j) == self.allows(j, i)))
    }
}

/// Graph-induced structure: node tokens see all nodes, edge tokens see all
/// edges, each edge and its head or tail node see each other, and every
/// token sees itself.
pub fn build_attention_mask(seq: &TokenSequence) -> AttentionMask {
    let size = seq.len();
    let m = seq.num_nodes;
    let mut allow = vec![false; size * size];
    for i in 0..size {
        let node_i = i < m;
        for j in 0..size {
            allow[i * size + j] = node_i == (j < m);
        }
    }
    for (k, &(h, t)) in seq.incidence.iter().enumerate() {
        let e = m + k;
        for n in [h, t] {
            allow[e * size + n] = true;
            allow[n * size + e] = true;
        }
    }
    AttentionMask {
        size,
        allow: Arc::from(allow),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityId, Query, RelationId, Triple};
    use crate::reader::build_tokens;
    use crate::retriever::{Provenance, Strategy, SubgraphContext};

    fn seq(edges: Vec<Triple>) -> TokenSequence {
        let q = Query::new(EntityId(0), RelationId(0));
        let c = SubgraphContext::from_edges(
            q,
            edges,
            &Default::default(),
            Provenance {
                strategy: Strategy::Paths,
                paths: None,
            },
        );
        build_tokens(&c).unwrap()
    }

    #[test]
    fn two_triple_chain_has_21_entries() {
        let s = seq(vec![Triple::new(0, 0, 1), Triple::new(1, 1, 2)]);
        let mask = build_attention_mask(&s);
        // 9 node-node, 4 edge-edge, 8 incidence
        assert_eq!(mask.allowed_count(), 21);
        assert!(mask.allows(0, 3) && mask.allows(3, 1) && mask.allows(1, 4) && mask.allows(4, 2));
        assert!(!mask.allows(0, 4) && !mask.allows(2, 3));
        assert!(mask.is_symmetric());
    }

    #[test]
    fn single_node() {
        let mask = build_attention_mask(&seq(vec![]));
        assert_eq!(mask.size(), 1);
        assert!(mask.allows(0, 0));
    }

    #[test]
    fn full_mask_allows_everything() {
        let mask = AttentionMask::full(5);
        assert_eq!(mask.allowed_count(), 25);
    }
}
