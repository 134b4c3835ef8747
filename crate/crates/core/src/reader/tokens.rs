use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId};
use crate::retriever::SubgraphContext;

/// What a token looks up in the embedding tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lookup {
    Entity(EntityId),
    Relation(RelationId),
    /// The learned placeholder for the unknown answer.
    Mask,
    /// The query tower's summary token.
    Cls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Entity = 0,
    Relation = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Segment {
    Other = 0,
    Terminal = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Token {
    pub lookup: Lookup,
    pub kind: TokenKind,
    pub segment: Segment,
}

/// Node tokens followed by edge tokens.
///
/// `incidence[k]` holds the positions of the head and tail node tokens of
/// edge token `m + k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    pub incidence: Vec<(usize, usize)>,
    pub num_nodes: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_edges(&self) -> usize {
        self.incidence.len()
    }

    /// Position of the `<MASK>` node, if one was attached.
    pub fn mask_position(&self) -> Option<usize> {
        self.tokens[..self.num_nodes]
            .iter()
            .position(|t| t.lookup == Lookup::Mask)
    }
}

/// One token per context node (in node order, segment from the terminal
/// flag) and one per edge (in edge order, segment "other").
pub fn build_tokens(ctx: &SubgraphContext) -> Result<TokenSequence> {
    build(ctx, false)
}

/// As [`build_tokens`], with a `<MASK>` node appended after the context
/// nodes and the edge `(source, query relation, <MASK>)` appended last.
pub fn build_tokens_with_query_edge(ctx: &SubgraphContext) -> Result<TokenSequence> {
    build(ctx, true)
}

fn build(ctx: &SubgraphContext, attach_query: bool) -> Result<TokenSequence> {
    ctx.validate()?;
    let mut tokens: Vec<Token> = ctx
        .nodes
        .iter()
        .zip(&ctx.terminal)
        .map(|(&e, &terminal)| Token {
            lookup: Lookup::Entity(e),
            kind: TokenKind::Entity,
            segment: if terminal { Segment::Terminal } else { Segment::Other },
        })
        .collect();
    if attach_query {
        tokens.push(Token {
            lookup: Lookup::Mask,
            kind: TokenKind::Entity,
            segment: Segment::Other,
        });
    }
    let num_nodes = tokens.len();
    let mut incidence = Vec::with_capacity(ctx.edges.len() + 1);
    for e in &ctx.edges {
        let pos = |n: EntityId| {
            ctx.node_position(n)
                .ok_or_else(|| Error::Graph(format!("edge endpoint {n} is not a context node")))
        };
        incidence.push((pos(e.head)?, pos(e.tail)?));
        tokens.push(edge_token(e.relation));
    }
    if attach_query {
        incidence.push((0, num_nodes - 1));
        tokens.push(edge_token(ctx.query.relation));
    }
    Ok(TokenSequence {
        tokens,
        incidence,
        num_nodes,
    })
}

fn edge_token(r: RelationId) -> Token {
    Token {
        lookup: Lookup::Relation(r),
        kind: TokenKind::Relation,
        segment: Segment::Other,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::kg::{Query, Triple};
    use crate::retriever::{Provenance, Strategy};

    pub(crate) fn ctx(edges: Vec<Triple>, terminals: &[u32]) -> SubgraphContext {
        let q = Query::new(EntityId(0), RelationId(0));
        let terminals: HashSet<EntityId> = terminals.iter().map(|&e| EntityId(e)).collect();
        SubgraphContext::from_edges(
            q,
            edges,
            &terminals,
            Provenance {
                strategy: Strategy::Paths,
                paths: None,
            },
        )
    }

    #[test]
    fn nodes_then_edges() {
        // (a, r1, b), (b, r2, c)
        let c = ctx(vec![Triple::new(0, 0, 1), Triple::new(1, 1, 2)], &[2]);
        let seq = build_tokens(&c).unwrap();
        assert_eq!(seq.len(), 5);
        assert_eq!(seq.num_nodes, 3);
        let lookups: Vec<Lookup> = seq.tokens.iter().map(|t| t.lookup).collect();
        assert_eq!(
            lookups,
            vec![
                Lookup::Entity(EntityId(0)),
                Lookup::Entity(EntityId(1)),
                Lookup::Entity(EntityId(2)),
                Lookup::Relation(RelationId(0)),
                Lookup::Relation(RelationId(1)),
            ]
        );
        let segs: Vec<Segment> = seq.tokens.iter().map(|t| t.segment).collect();
        use Segment::*;
        assert_eq!(segs, vec![Other, Other, Terminal, Other, Other]);
        assert_eq!(seq.incidence, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn empty_context_is_the_source_alone() {
        let seq = build_tokens(&ctx(vec![], &[])).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.num_edges(), 0);
        assert_eq!(seq.mask_position(), None);
    }

    #[test]
    fn repeated_predicates_get_their_own_tokens() {
        let seq = build_tokens(&ctx(vec![Triple::new(0, 0, 1), Triple::new(0, 0, 3)], &[])).unwrap();
        assert_eq!(seq.num_edges(), 2);
        assert_eq!(seq.tokens[3].lookup, seq.tokens[4].lookup);
        assert_eq!(seq.incidence, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn query_edge_attaches_a_mask_node() {
        let c = ctx(vec![Triple::new(0, 2, 1)], &[1]);
        let seq = build_tokens_with_query_edge(&c).unwrap();
        assert_eq!(seq.num_nodes, 3);
        assert_eq!(seq.mask_position(), Some(2));
        assert_eq!(seq.incidence, vec![(0, 1), (0, 2)]);
        assert_eq!(seq.tokens[4].lookup, Lookup::Relation(RelationId(0)));
    }
}
