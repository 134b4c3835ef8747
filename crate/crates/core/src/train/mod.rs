//! Training, filtered-ranking evaluation and ablations.

mod batch;
mod cache;
mod rank;
mod trainer;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{queries_both_directions, Dataset, KnowledgeGraph, Split};
use crate::numerics::Real;
use crate::reader::{forward_prepared, ModelConfig, ModelParams, Prepared};
use crate::retriever::{coverage_stats, Retriever, SubgraphContext};

pub use batch::make_batches;
pub use cache::{cache_key, cached_contexts, split_hash};
pub use rank::{filtered_rank, Metrics, QueryRank, RankingReport, Slices};
pub use trainer::{
    build_train_instances, check_no_leakage, loss_csv, read_loss_csv, total_steps, train, write_loss_csv,
    StepRecord, TrainConfig, TrainInstance,
};

/// Ranks every context's gold target among all entities, filtering the
/// other known answers of its `(source, relation)` pair.
pub fn evaluate<F: Real>(
    params: &ModelParams<F>,
    kg: &KnowledgeGraph,
    contexts: &[SubgraphContext],
    split: &str,
    strategy: &str,
) -> Result<RankingReport> {
    let ranks: Vec<QueryRank> = contexts
        .par_iter()
        .enumerate()
        .map(|(i, ctx)| {
            let q = ctx.query;
            let target = q
                .target
                .ok_or_else(|| Error::InvalidArgument(format!("context {i} has no gold target")))?;
            let input = Prepared::for_model(ctx, params)?;
            let out = forward_prepared(params, &input)?;
            let rank = filtered_rank(&out.logits, target.index(), kg.known_tails(q.source, q.relation))?;
            Ok(QueryRank {
                source: q.source,
                relation: q.relation,
                target,
                rank,
                present: ctx.contains_entity(target),
            })
        })
        .collect::<Result<_>>()?;
    let report = RankingReport::from_ranks(split, strategy, ranks);
    debug_assert!((report.coverage - coverage_stats(contexts).unwrap_or(0.0)).abs() < 1e-12);
    Ok(report)
}

/// Evaluation contexts for a split: both query directions. Training
/// queries get their gold edge excluded, exactly as during training.
pub fn split_contexts(data: &Dataset, retriever: &Retriever, split: Split) -> Result<Vec<SubgraphContext>> {
    let queries = queries_both_directions(data.split(split), data.graph.num_original_relations());
    retriever.retrieve_all(&data.graph, &queries, split == Split::Train)
}

/// Model config with vocabulary sizes taken from the graph when unset.
pub fn sized_for(cfg: &ModelConfig, kg: &KnowledgeGraph) -> ModelConfig {
    let mut cfg = cfg.clone();
    if cfg.num_entities == 0 {
        cfg.num_entities = kg.num_entities();
    }
    if cfg.num_relations == 0 {
        cfg.num_relations = kg.num_relations();
    }
    cfg
}

/// Trained parameters, the loss curve and the evaluation report of one run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub params: ModelParams<f32>,
    pub losses: Vec<StepRecord>,
    pub report: RankingReport,
    /// Epoch whose parameters were kept.
    pub epoch: usize,
}

/// Retrieve, train and evaluate on `eval_split`. With
/// `select_on_valid`, the kept parameters are those of the epoch with the
/// highest validation MRR, earliest on ties.
pub fn run_experiment(
    data: &Dataset,
    retriever: &Retriever,
    model: &ModelConfig,
    train_cfg: &TrainConfig,
    eval_split: Split,
) -> Result<RunOutcome> {
    let cfg = sized_for(model, &data.graph);
    let mut params = ModelParams::<f32>::init(&cfg, train_cfg.seed)?;
    let instances = build_train_instances(&data.graph, retriever, &data.train)?;
    let strategy = retriever.config().strategy.as_str();
    let valid = if train_cfg.select_on_valid && !data.valid.is_empty() {
        Some(split_contexts(data, retriever, Split::Valid)?)
    } else {
        None
    };
    let mut best: Option<(f64, usize, ModelParams<f32>)> = None;
    let losses = train(&mut params, &instances, train_cfg, |epoch, _, p| {
        if let Some(valid) = &valid {
            let mrr = evaluate(p, &data.graph, valid, "valid", strategy)?.mrr;
            if best.as_ref().is_none_or(|(b, _, _)| mrr > *b) {
                best = Some((mrr, epoch, p.clone()));
            }
        }
        Ok(())
    })?;
    let epoch = match best {
        Some((_, epoch, p)) => {
            params = p;
            epoch
        }
        None => train_cfg.epochs.min(losses.len().div_ceil(instances.len().div_ceil(train_cfg.batch_size.max(1)))),
    };
    let contexts = split_contexts(data, retriever, eval_split)?;
    let report = evaluate(&params, &data.graph, &contexts, &eval_split.to_string(), strategy)?;
    Ok(RunOutcome {
        params,
        losses,
        report,
        epoch,
    })
}

/// Reader variants compared by the ablation suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReaderVariant {
    Full,
    NoCrossAttention,
    NoGraphMask,
    NoSubgraphRepr,
    NoQueryRepr,
}

impl ReaderVariant {
    pub const ALL: [ReaderVariant; 5] = [
        ReaderVariant::Full,
        ReaderVariant::NoCrossAttention,
        ReaderVariant::NoGraphMask,
        ReaderVariant::NoSubgraphRepr,
        ReaderVariant::NoQueryRepr,
    ];

    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        c.no_cross_attention = false;
        c.full_attention = false;
        c.no_subgraph_repr = false;
        c.no_query_repr = false;
        match self {
            ReaderVariant::Full => {}
            ReaderVariant::NoCrossAttention => c.no_cross_attention = true,
            ReaderVariant::NoGraphMask => c.full_attention = true,
            ReaderVariant::NoSubgraphRepr => c.no_subgraph_repr = true,
            ReaderVariant::NoQueryRepr => c.no_query_repr = true,
        }
        c
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReaderVariant::Full => "full",
            ReaderVariant::NoCrossAttention => "no-cross-attention",
            ReaderVariant::NoGraphMask => "no-graph-mask",
            ReaderVariant::NoSubgraphRepr => "no-subgraph-repr",
            ReaderVariant::NoQueryRepr => "no-query-repr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub reader: ReaderVariant,
    pub retriever: String,
    pub report: RankingReport,
}

/// Every reader variant against every retriever, all sharing data, seed
/// and training settings. Per-query ranks are dropped from the rows.
pub fn ablation_suite(
    data: &Dataset,
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    retrievers: &[(String, Retriever)],
    readers: &[ReaderVariant],
    eval_split: Split,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for (name, retriever) in retrievers {
        for &variant in readers {
            let outcome = run_experiment(data, retriever, &variant.apply(base), train_cfg, eval_split)?;
            rows.push(AblationRow {
                reader: variant,
                retriever: name.clone(),
                report: outcome.report.without_per_query(),
            });
        }
    }
    Ok(rows)
}
