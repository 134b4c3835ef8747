//! Query-specific subgraph retrieval under an edge budget.

mod context;
mod jsonl;
mod paths;
mod rules;
mod scorer;
mod uninformed;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, Query, RelationId, Triple};

pub use context::{Path, Provenance, Strategy, SubgraphContext};
pub use jsonl::{read_contexts, read_path_file, write_contexts, ContextRecord};
pub use paths::{
    beam_search_paths, retrieve_path_union, validate_paths, BeamConfig, PathScorer, UniformScorer,
};
pub use rules::{composition_rules, RuleScorer};
pub use scorer::{TranslationalConfig, TranslationalScorer};
pub use uninformed::{retrieve_bfs, retrieve_one_hop};

/// Which stored edges a walk may follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Traversal {
    /// Original and inverse edges.
    #[default]
    Both,
    OriginalsOnly,
}

impl Traversal {
    pub fn allows(self, kg: &KnowledgeGraph, r: RelationId) -> bool {
        match self {
            Traversal::Both => true,
            Traversal::OriginalsOnly => !kg.is_inverse(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrieverConfig {
    pub strategy: Strategy,
    pub budget: usize,
    pub seed: u64,
    pub traversal: Traversal,
    pub beam_width: usize,
    pub max_hops: usize,
    pub path_scorer: PathScorerKind,
    /// Used when `path_scorer` is `translational`.
    pub scorer: TranslationalConfig,
}

/// Heuristic that ranks partial paths during beam retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathScorerKind {
    #[default]
    Rules,
    Translational,
}

enum BeamScorer {
    Rules(RuleScorer),
    Translational(TranslationalScorer),
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        RetrieverConfig {
            strategy: Strategy::Bfs,
            budget: 100,
            seed: 0,
            traversal: Traversal::Both,
            beam_width: 100,
            max_hops: 2,
            path_scorer: PathScorerKind::Rules,
            scorer: TranslationalConfig::default(),
        }
    }
}

/// A configured retrieval strategy, ready to run over many queries.
pub struct Retriever {
    config: RetrieverConfig,
    scorer: Option<BeamScorer>,
    path_file: HashMap<(EntityId, RelationId), Vec<Path>>,
}

impl Retriever {
    /// Builds the strategy; beam retrieval mines or fits its path scorer here.
    /// Path-file retrieval needs [`Retriever::with_paths`] instead.
    pub fn new(config: RetrieverConfig, kg: &KnowledgeGraph) -> Result<Self> {
        let scorer = match config.strategy {
            Strategy::Beam => {
                if config.beam_width == 0 || config.max_hops == 0 {
                    return Err(Error::InvalidArgument("beam width and max hops must be at least 1".into()));
                }
                Some(match config.path_scorer {
                    PathScorerKind::Rules => BeamScorer::Rules(RuleScorer::mine(kg)),
                    PathScorerKind::Translational => {
                        BeamScorer::Translational(TranslationalScorer::train(kg, &config.scorer))
                    }
                })
            }
            Strategy::Paths => {
                return Err(Error::InvalidArgument(
                    "path-file retrieval needs precomputed paths".into(),
                ))
            }
            _ => None,
        };
        Ok(Retriever {
            config,
            scorer,
            path_file: HashMap::new(),
        })
    }

    /// Path-union retrieval over precomputed paths keyed by query.
    pub fn with_paths(config: RetrieverConfig, paths: HashMap<(EntityId, RelationId), Vec<Path>>) -> Self {
        Retriever {
            config: RetrieverConfig {
                strategy: Strategy::Paths,
                ..config
            },
            scorer: None,
            path_file: paths,
        }
    }

    pub fn config(&self) -> &RetrieverConfig {
        &self.config
    }

    pub fn scorer(&self) -> Option<&dyn PathScorer> {
        self.scorer.as_ref().map(|s| match s {
            BeamScorer::Rules(r) => r as &dyn PathScorer,
            BeamScorer::Translational(t) => t,
        })
    }

    /// Context for one query. With `exclude_gold`, the gold triple and its
    /// inverse are kept out of the walk and stripped from the result.
    pub fn retrieve(&self, kg: &KnowledgeGraph, query: &Query, exclude_gold: bool) -> Result<SubgraphContext> {
        let gold = if exclude_gold { query.triple() } else { None };
        let forbidden: Vec<Triple> = gold.iter().flat_map(|t| [*t, kg.inverse(t)]).collect();
        let c = &self.config;
        let ctx = match c.strategy {
            Strategy::Bfs => retrieve_bfs(kg, query, c.budget, c.traversal, &forbidden),
            Strategy::OneHop => retrieve_one_hop(kg, query, c.budget, c.seed, c.traversal, &forbidden),
            Strategy::Beam => {
                let scorer = self.scorer().expect("beam retriever has a scorer");
                let beam = BeamConfig {
                    width: c.beam_width,
                    max_hops: c.max_hops,
                    traversal: c.traversal,
                };
                let paths = beam_search_paths(kg, query, &beam, scorer, &forbidden)?;
                retrieve_path_union(query, &paths, c.budget, Strategy::Beam)?
            }
            Strategy::Paths => match self.path_file.get(&(query.source, query.relation)) {
                Some(paths) => retrieve_path_union(query, paths, c.budget, Strategy::Paths)?,
                None => SubgraphContext::empty(*query, Strategy::Paths),
            },
        };
        Ok(match gold {
            Some(t) => strip_query_edge(&ctx, &t, kg.num_original_relations()),
            None => ctx,
        })
    }

    /// Contexts for many queries, computed in parallel, returned in order.
    pub fn retrieve_all(&self, kg: &KnowledgeGraph, queries: &[Query], exclude_gold: bool) -> Result<Vec<SubgraphContext>> {
        queries
            .par_iter()
            .map(|q| self.retrieve(kg, q, exclude_gold))
            .collect()
    }
}

/// Removes every context edge equal to `query_triple` or its inverse, then
/// recomputes nodes. Surviving nodes keep their terminal flags.
pub fn strip_query_edge(ctx: &SubgraphContext, query_triple: &Triple, num_original_relations: u32) -> SubgraphContext {
    let inverse = query_triple.inverse(num_original_relations);
    if !ctx.edges.iter().any(|e| e == query_triple || *e == inverse) {
        return ctx.clone();
    }
    let edges: Vec<Triple> = ctx
        .edges
        .iter()
        .filter(|e| *e != query_triple && **e != inverse)
        .copied()
        .collect();
    SubgraphContext::from_edges(ctx.query, edges, &ctx.terminals(), ctx.provenance.clone())
}

/// Fraction of contexts whose nodes include their query's gold target.
pub fn coverage_stats(contexts: &[SubgraphContext]) -> Result<f64> {
    if contexts.is_empty() {
        return Ok(0.0);
    }
    let mut hit = 0usize;
    for (i, c) in contexts.iter().enumerate() {
        let target = c
            .query
            .target
            .ok_or_else(|| Error::InvalidArgument(format!("context {i} has no gold target")))?;
        if c.contains_entity(target) {
            hit += 1;
        }
    }
    Ok(hit as f64 / contexts.len() as f64)
}

/// Every context edge is an augmented training triple.
pub fn is_sound(kg: &KnowledgeGraph, ctx: &SubgraphContext) -> bool {
    ctx.edges.iter().all(|e| kg.in_train(e))
}

#[cfg(test)]
mod tests;
