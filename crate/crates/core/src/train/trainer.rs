use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{queries_both_directions, EntityId, KnowledgeGraph, Query, Triple};
use crate::numerics::{lr_schedule, AdamaxConfig, AdamaxState, Tensor};
use crate::reader::{loss_and_grads, ModelParams, Prepared};
use crate::retriever::{Retriever, SubgraphContext};
use crate::train::make_batches;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Stops early once this many steps have run; also fixes the schedule
    /// length when smaller than `epochs` times the batch count.
    pub max_steps: Option<usize>,
    pub optimizer: AdamaxConfig,
    /// Seeds parameter init and dropout.
    pub seed: u64,
    pub shuffle_buckets: bool,
    /// Keep the parameters of the epoch with the best validation MRR
    /// instead of the last epoch. Ignored when there is no validation split.
    pub select_on_valid: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            max_steps: None,
            optimizer: AdamaxConfig::default(),
            seed: 0,
            shuffle_buckets: false,
            select_on_valid: false,
        }
    }
}

/// One training example: the query, its context with the gold edge
/// stripped, and the answer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainInstance {
    pub query: Query,
    pub context: SubgraphContext,
    pub gold: EntityId,
}

/// Both query directions for every triple, each with a retrieved context
/// that excludes the triple itself.
pub fn build_train_instances(kg: &KnowledgeGraph, retriever: &Retriever, triples: &[Triple]) -> Result<Vec<TrainInstance>> {
    let queries = queries_both_directions(triples, kg.num_original_relations());
    let contexts = retriever.retrieve_all(kg, &queries, true)?;
    let instances: Vec<TrainInstance> = queries
        .into_iter()
        .zip(contexts)
        .map(|(query, context)| TrainInstance {
            gold: query.target.expect("queries from triples carry targets"),
            query,
            context,
        })
        .collect();
    check_no_leakage(&instances, kg.num_original_relations())?;
    Ok(instances)
}

/// Fails if any context holds its own gold triple in either direction.
pub fn check_no_leakage(instances: &[TrainInstance], num_original_relations: u32) -> Result<()> {
    for (i, inst) in instances.iter().enumerate() {
        let gold = Triple {
            head: inst.query.source,
            relation: inst.query.relation,
            tail: inst.gold,
        };
        let inverse = gold.inverse(num_original_relations);
        if inst.context.edges.iter().any(|e| *e == gold || *e == inverse) {
            return Err(Error::InvalidArgument(format!("training instance {i} leaks its gold triple")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

pub fn total_steps(num_instances: usize, cfg: &TrainConfig) -> usize {
    let per_epoch = num_instances.div_ceil(cfg.batch_size.max(1));
    let total = per_epoch * cfg.epochs;
    cfg.max_steps.map_or(total, |m| m.min(total))
}

/// Examples per parallel work unit. Fixed, so the reduction order does not
/// depend on the thread count.
const CHUNK: usize = 8;

fn add_grads(acc: &mut [Option<Tensor<f32>>], grads: Vec<Option<Tensor<f32>>>) {
    for (a, g) in acc.iter_mut().zip(grads) {
        match (a.as_mut(), g) {
            (Some(a), Some(g)) => a.add_assign(&g),
            (None, Some(g)) => *a = Some(g),
            _ => {}
        }
    }
}

fn dropout_seed(seed: u64, step: usize, index: usize) -> u64 {
    seed ^ (step as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (index as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

/// Mini-batch Adamax on the mean cross-entropy of each batch.
///
/// Batches come from [`make_batches`] over context sizes. Step `t`
/// (1-based) uses `lr_schedule(t, total, peak)`. `on_epoch` runs after
/// every completed epoch with the epoch number and the step count.
pub fn train(
    params: &mut ModelParams<f32>,
    instances: &[TrainInstance],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, usize, &ModelParams<f32>) -> Result<()>,
) -> Result<Vec<StepRecord>> {
    if instances.is_empty() {
        return Err(Error::InvalidArgument("no training instances".into()));
    }
    let prepared: Vec<Prepared> = instances
        .iter()
        .map(|i| Prepared::for_model(&i.context, params))
        .collect::<Result<_>>()?;
    let sizes: Vec<usize> = prepared.iter().map(Prepared::size).collect();
    let total = total_steps(instances.len(), cfg);
    let mut state = AdamaxState::new(cfg.optimizer, params.tensors());
    let dropout = params.config().dropout > 0.0;
    let mut records = Vec::with_capacity(total);
    let mut step = 0usize;

    for epoch in 1..=cfg.epochs {
        let shuffle = cfg.shuffle_buckets.then(|| cfg.seed.wrapping_add(epoch as u64));
        for batch in make_batches(&sizes, cfg.batch_size, shuffle)? {
            if step >= total {
                break;
            }
            step += 1;
            let frozen: &ModelParams<f32> = params;
            let partial: Vec<(f64, Vec<Option<Tensor<f32>>>)> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut loss = 0.0f64;
                    let mut acc: Vec<Option<Tensor<f32>>> = vec![None; frozen.tensors().len()];
                    for &i in chunk {
                        let seed = dropout.then(|| dropout_seed(cfg.seed, step, i));
                        let (l, g) = loss_and_grads(frozen, &prepared[i], instances[i].gold.index(), seed)
                            .map_err(|e| Error::Numeric(format!("step {step}, instance {i}: {e}")))?;
                        loss += l as f64;
                        add_grads(&mut acc, g);
                    }
                    Ok((loss, acc))
                })
                .collect::<Result<_>>()?;
            let mut loss = 0.0;
            let mut grads: Vec<Option<Tensor<f32>>> = vec![None; params.tensors().len()];
            for (l, g) in partial {
                loss += l;
                add_grads(&mut grads, g);
            }
            let scale = 1.0 / batch.len() as f32;
            grads.iter_mut().flatten().for_each(|g| g.scale_assign(scale));
            let loss = loss / batch.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss {loss} at step {step}")));
            }
            let lr = lr_schedule(step as u64, total as u64, cfg.optimizer.peak_lr);
            state.step(params.tensors_mut(), &grads, lr)?;
            records.push(StepRecord { step, lr, loss });
        }
        on_epoch(epoch, step, params)?;
        if step >= total {
            break;
        }
    }
    if !params.is_finite() {
        return Err(Error::Numeric("parameters became non-finite".into()));
    }
    Ok(records)
}

/// `step,lr,loss` with a header row. Values use Rust's shortest
/// round-trip formatting, so equal runs give equal bytes.
pub fn loss_csv(records: &[StepRecord]) -> String {
    let mut out = String::from("step,lr,loss\n");
    for r in records {
        writeln!(out, "{},{},{}", r.step, r.lr, r.loss).expect("writing to a String");
    }
    out
}

pub fn write_loss_csv(path: &Path, records: &[StepRecord]) -> Result<()> {
    std::fs::write(path, loss_csv(records)).map_err(|e| Error::io(path, e))
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<StepRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let parse_err = |m: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: m,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", f.len())));
        }
        out.push(StepRecord {
            step: f[0].parse().map_err(|e| parse_err(format!("{e}")))?,
            lr: f[1].parse().map_err(|e| parse_err(format!("{e}")))?,
            loss: f[2].parse().map_err(|e| parse_err(format!("{e}")))?,
        });
    }
    Ok(out)
}
