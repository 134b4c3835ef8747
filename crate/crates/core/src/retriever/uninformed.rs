use std::collections::{HashMap, HashSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kg::{EntityId, KnowledgeGraph, Query, Triple};
use crate::retriever::{Provenance, Strategy, SubgraphContext, Traversal};

/// First `budget` edges met by a breadth-first walk from the source.
///
/// The frontier is FIFO and each node's edges are taken in adjacency order.
/// An edge whose reverse reading is already in the context is skipped, as
/// is any edge in `forbidden`. Terminals are the nodes of the deepest layer
/// reached plus any non-source node whose out-edges were never collected.
pub fn retrieve_bfs(
    kg: &KnowledgeGraph,
    query: &Query,
    budget: usize,
    traversal: Traversal,
    forbidden: &[Triple],
) -> SubgraphContext {
    let source = query.source;
    let mut edges = Vec::new();
    let mut seen: HashSet<Triple> = HashSet::new();
    let mut depth: HashMap<EntityId, usize> = HashMap::from([(source, 0)]);
    let mut expanded: HashSet<EntityId> = HashSet::new();
    let mut queue = VecDeque::from([source]);

    'walk: while let Some(u) = queue.pop_front() {
        for &(r, v) in kg.out_edges(u) {
            if edges.len() >= budget {
                break 'walk;
            }
            if !traversal.allows(kg, r) {
                continue;
            }
            let t = Triple {
                head: u,
                relation: r,
                tail: v,
            };
            if forbidden.contains(&t) || seen.contains(&t) {
                continue;
            }
            seen.insert(t);
            seen.insert(kg.inverse(&t));
            edges.push(t);
            expanded.insert(u);
            if !depth.contains_key(&v) {
                depth.insert(v, depth[&u] + 1);
                queue.push_back(v);
            }
        }
    }

    let deepest = edges
        .iter()
        .flat_map(|e| [e.head, e.tail])
        .map(|n| depth[&n])
        .max()
        .unwrap_or(0);
    let terminals: HashSet<EntityId> = depth
        .iter()
        .filter(|(&n, &d)| n != source && (d == deepest || !expanded.contains(&n)))
        .map(|(&n, _)| n)
        .collect();
    SubgraphContext::from_edges(
        *query,
        edges,
        &terminals,
        Provenance {
            strategy: Strategy::Bfs,
            paths: None,
        },
    )
}

fn query_seed(seed: u64, query: &Query) -> u64 {
    seed ^ (query.source.0 as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (query.relation.0 as u64 + 1).wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
}

/// Uniform sample without replacement of `min(budget, degree)` outgoing
/// edges of the source, kept in adjacency order. The sample depends only
/// on `(seed, source, relation)`.
pub fn retrieve_one_hop(
    kg: &KnowledgeGraph,
    query: &Query,
    budget: usize,
    seed: u64,
    traversal: Traversal,
    forbidden: &[Triple],
) -> SubgraphContext {
    let source = query.source;
    let mut seen = HashSet::new();
    let candidates: Vec<Triple> = kg
        .out_edges(source)
        .iter()
        .filter(|(r, _)| traversal.allows(kg, *r))
        .map(|&(relation, tail)| Triple {
            head: source,
            relation,
            tail,
        })
        .filter(|t| !forbidden.contains(t) && seen.insert(*t))
        .collect();
    let k = budget.min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(query_seed(seed, query));
    let mut picked = rand::seq::index::sample(&mut rng, candidates.len(), k).into_vec();
    picked.sort_unstable();
    let edges: Vec<Triple> = picked.into_iter().map(|i| candidates[i]).collect();
    let terminals: HashSet<EntityId> = edges.iter().map(|e| e.tail).filter(|&t| t != source).collect();
    SubgraphContext::from_edges(
        *query,
        edges,
        &terminals,
        Provenance {
            strategy: Strategy::OneHop,
            paths: None,
        },
    )
}
