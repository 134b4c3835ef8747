use std::cmp::Ordering;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, Query, Triple};
use crate::retriever::{Path, Provenance, Strategy, SubgraphContext, Traversal};

/// Checks that every path starts at `source` and chains head to tail.
pub fn validate_paths(source: EntityId, paths: &[Path]) -> Result<()> {
    for (p, path) in paths.iter().enumerate() {
        let mut at = source;
        for (s, step) in path.iter().enumerate() {
            if step.head != at {
                return Err(Error::PathChain {
                    path: p,
                    step: s,
                    message: format!("head {} does not continue from {}", step.head, at),
                });
            }
            at = step.tail;
        }
    }
    Ok(())
}

/// Deduplicated union of the path edges in first-occurrence order, cut at
/// `budget`. The end entity of every path whose edges all survive the cut is
/// flagged terminal.
pub fn retrieve_path_union(query: &Query, paths: &[Path], budget: usize, strategy: Strategy) -> Result<SubgraphContext> {
    validate_paths(query.source, paths)?;
    let mut edges = Vec::new();
    let mut kept: HashSet<Triple> = HashSet::new();
    'outer: for path in paths {
        for t in path {
            if kept.contains(t) {
                continue;
            }
            if edges.len() >= budget {
                break 'outer;
            }
            kept.insert(*t);
            edges.push(*t);
        }
    }
    let terminals: HashSet<EntityId> = paths
        .iter()
        .filter(|p| !p.is_empty() && p.iter().all(|t| kept.contains(t)))
        .map(|p| p[p.len() - 1].tail)
        .filter(|&t| t != query.source)
        .collect();
    Ok(SubgraphContext::from_edges(
        *query,
        edges,
        &terminals,
        Provenance {
            strategy,
            paths: Some(paths.to_vec()),
        },
    ))
}

/// Scores a (partial) path for a query; higher is better.
pub trait PathScorer: Sync {
    fn score(&self, query: &Query, path: &[Triple]) -> f64;
}

impl<F> PathScorer for F
where
    F: Fn(&Query, &[Triple]) -> f64 + Sync,
{
    fn score(&self, query: &Query, path: &[Triple]) -> f64 {
        self(query, path)
    }
}

/// Every path scores the same; order comes from the tie-break alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformScorer;

impl PathScorer for UniformScorer {
    fn score(&self, _: &Query, _: &[Triple]) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamConfig {
    pub width: usize,
    pub max_hops: usize,
    pub traversal: Traversal,
}

fn rank_candidates(a: &(Path, f64), b: &(Path, f64)) -> Ordering {
    let (pa, sa) = a;
    let (pb, sb) = b;
    let la = pa.last().expect("non-empty");
    let lb = pb.last().expect("non-empty");
    sb.total_cmp(sa)
        .then(la.tail.cmp(&lb.tail))
        .then(la.relation.cmp(&lb.relation))
        .then_with(|| pa.cmp(pb))
}

/// Beam decoding of paths from the query source.
///
/// Each hop extends every live path by each outgoing edge that neither
/// revisits an entity on the path nor appears in `forbidden`, scores the
/// extensions and keeps the best `width`. Ties go to the lower tail entity,
/// then the lower relation. Paths that cannot be extended are dropped, so
/// every returned path has exactly `max_hops` edges.
pub fn beam_search_paths(
    kg: &KnowledgeGraph,
    query: &Query,
    cfg: &BeamConfig,
    scorer: &dyn PathScorer,
    forbidden: &[Triple],
) -> Result<Vec<Path>> {
    if cfg.width == 0 || cfg.max_hops == 0 {
        return Err(Error::InvalidArgument(format!(
            "beam width {} and max hops {} must both be at least 1",
            cfg.width, cfg.max_hops
        )));
    }
    let mut beams: Vec<Path> = vec![Vec::new()];
    for _ in 0..cfg.max_hops {
        let mut candidates: Vec<(Path, f64)> = Vec::new();
        for path in &beams {
            let at = path.last().map_or(query.source, |t| t.tail);
            let visited: HashSet<EntityId> = std::iter::once(query.source)
                .chain(path.iter().map(|t| t.tail))
                .collect();
            for &(relation, tail) in kg.out_edges(at) {
                if !cfg.traversal.allows(kg, relation) || visited.contains(&tail) {
                    continue;
                }
                let t = Triple {
                    head: at,
                    relation,
                    tail,
                };
                if forbidden.contains(&t) {
                    continue;
                }
                let mut next = path.clone();
                next.push(t);
                let s = scorer.score(query, &next);
                candidates.push((next, s));
            }
        }
        candidates.sort_by(rank_candidates);
        candidates.dedup_by(|a, b| a.0 == b.0);
        candidates.truncate(cfg.width);
        beams = candidates.into_iter().map(|(p, _)| p).collect();
        if beams.is_empty() {
            break;
        }
    }
    Ok(beams)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::RelationId;
    use crate::synth::desk_kg;

    fn desk_query() -> (crate::kg::Dataset, Query) {
        let d = desk_kg();
        let q = Query::new(d.vocab.entity("a").unwrap(), d.vocab.relation("r1").unwrap());
        (d, q)
    }

    #[test]
    fn two_disjoint_paths() {
        // a -> b -> c and a -> d
        let q = Query::new(EntityId(0), RelationId(0));
        let paths = vec![
            vec![Triple::new(0, 0, 1), Triple::new(1, 1, 2)],
            vec![Triple::new(0, 0, 3)],
        ];
        let ctx = retrieve_path_union(&q, &paths, 10, Strategy::Paths).unwrap();
        assert_eq!(ctx.edges.len(), 3);
        assert_eq!(ctx.terminals(), HashSet::from([EntityId(2), EntityId(3)]));
        ctx.validate().unwrap();
    }

    #[test]
    fn union_is_idempotent() {
        let q = Query::new(EntityId(0), RelationId(0));
        let p = vec![Triple::new(0, 0, 1), Triple::new(1, 1, 2)];
        let once = retrieve_path_union(&q, std::slice::from_ref(&p), 10, Strategy::Paths).unwrap();
        let twice = retrieve_path_union(&q, &[p.clone(), p], 10, Strategy::Paths).unwrap();
        assert_eq!(once.edges, twice.edges);
        assert_eq!(once.nodes, twice.nodes);
        assert_eq!(once.terminal, twice.terminal);
    }

    #[test]
    fn truncation_drops_incomplete_path_terminals() {
        let q = Query::new(EntityId(0), RelationId(0));
        let paths = vec![
            vec![Triple::new(0, 0, 1), Triple::new(1, 1, 2)],
            vec![Triple::new(0, 0, 3), Triple::new(3, 1, 4)],
        ];
        let ctx = retrieve_path_union(&q, &paths, 3, Strategy::Paths).unwrap();
        assert_eq!(ctx.edges.len(), 3);
        assert_eq!(ctx.terminals(), HashSet::from([EntityId(2)]));
    }

    #[test]
    fn broken_chain_names_path_and_step() {
        let q = Query::new(EntityId(0), RelationId(0));
        let paths = vec![
            vec![Triple::new(0, 0, 1)],
            vec![Triple::new(0, 0, 1), Triple::new(2, 1, 3)],
        ];
        match retrieve_path_union(&q, &paths, 10, Strategy::Paths) {
            Err(Error::PathChain { path, step, .. }) => assert_eq!((path, step), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
        let wrong_start = vec![vec![Triple::new(5, 0, 1)]];
        assert!(matches!(
            validate_paths(EntityId(0), &wrong_start),
            Err(Error::PathChain { path: 0, step: 0, .. })
        ));
    }

    #[test]
    fn uniform_beam_breaks_ties_by_entity_index() {
        let (d, q) = desk_query();
        let cfg = BeamConfig {
            width: 2,
            max_hops: 1,
            traversal: Traversal::Both,
        };
        let paths = beam_search_paths(&d.graph, &q, &cfg, &UniformScorer, &[]).unwrap();
        let v = &d.vocab;
        let e = |h: &str, r: &str, t: &str| Triple {
            head: v.entity(h).unwrap(),
            relation: v.relation(r).unwrap(),
            tail: v.entity(t).unwrap(),
        };
        assert_eq!(paths, vec![vec![e("a", "r1", "b")], vec![e("a", "r1", "d")]]);
    }

    #[test]
    fn preferring_r3_starts_at_f() {
        let (d, q) = desk_query();
        let r3 = d.vocab.relation("r3").unwrap();
        let prefer_r3 = move |_: &Query, p: &[Triple]| p.iter().filter(|t| t.relation == r3).count() as f64;
        for hops in [1, 2] {
            let cfg = BeamConfig {
                width: 1,
                max_hops: hops,
                traversal: Traversal::Both,
            };
            let paths = beam_search_paths(&d.graph, &q, &cfg, &prefer_r3, &[]).unwrap();
            assert_eq!(paths.len(), 1);
            let first = paths[0][0];
            assert_eq!(first.relation, r3);
            assert_eq!(first.tail, d.vocab.entity("f").unwrap());
            assert_eq!(paths[0].len(), hops);
        }
    }

    #[test]
    fn zero_hops_or_width_rejected() {
        let (d, q) = desk_query();
        for (width, max_hops) in [(1, 0), (0, 1)] {
            let cfg = BeamConfig {
                width,
                max_hops,
                traversal: Traversal::Both,
            };
            assert!(beam_search_paths(&d.graph, &q, &cfg, &UniformScorer, &[]).is_err());
        }
    }

    #[test]
    fn beam_paths_chain_and_stay_in_graph() {
        let (d, _) = desk_query();
        for s in 0..6 {
            let q = Query::new(EntityId(s), RelationId(1));
            let cfg = BeamConfig {
                width: 3,
                max_hops: 3,
                traversal: Traversal::Both,
            };
            let paths = beam_search_paths(&d.graph, &q, &cfg, &UniformScorer, &[]).unwrap();
            assert!(paths.len() <= 3);
            validate_paths(q.source, &paths).unwrap();
            for p in &paths {
                assert!(p.len() <= 3);
                assert!(p.iter().all(|t| d.graph.in_train(t)));
            }
        }
    }
}
