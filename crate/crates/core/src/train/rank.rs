use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId};
use crate::numerics::Real;

/// Filtered rank of `gold` among `logits`.
///
/// Entities in `known_positives` other than the gold are removed. Strictly
/// higher scores count 1, equal scores count 1/2, so a tie with every
/// remaining candidate lands at the expected position.
pub fn filtered_rank<F: Real>(logits: &[F], gold: usize, known_positives: &[EntityId]) -> Result<f64> {
    if gold >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "gold {gold} out of range for {} entities",
            logits.len()
        )));
    }
    let mut filtered = vec![false; logits.len()];
    for e in known_positives {
        if let Some(f) = filtered.get_mut(e.index()) {
            *f = true;
        }
    }
    let g = logits[gold];
    let mut higher = 0usize;
    let mut equal = 0usize;
    for (e, &l) in logits.iter().enumerate() {
        if e == gold || filtered[e] {
            continue;
        }
        if l > g {
            higher += 1;
        } else if l == g {
            equal += 1;
        }
    }
    Ok(1.0 + higher as f64 + 0.5 * equal as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

impl Metrics {
    pub fn from_ranks(ranks: impl IntoIterator<Item = f64>) -> Self {
        let mut m = Metrics::default();
        for r in ranks {
            m.count += 1;
            m.mrr += 1.0 / r;
            m.hits1 += (r <= 1.0) as u8 as f64;
            m.hits3 += (r <= 3.0) as u8 as f64;
            m.hits10 += (r <= 10.0) as u8 as f64;
        }
        if m.count > 0 {
            let n = m.count as f64;
            m.mrr /= n;
            m.hits1 /= n;
            m.hits3 /= n;
            m.hits10 /= n;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryRank {
    pub source: EntityId,
    pub relation: RelationId,
    pub target: EntityId,
    pub rank: f64,
    /// Whether the target entity appeared in the retrieved context.
    pub present: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Slices {
    pub present: Metrics,
    pub absent: Metrics,
}

/// Aggregates over per-query filtered ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub split: String,
    pub strategy: String,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    /// Fraction of queries whose context contains the target.
    pub coverage: f64,
    pub slices: Slices,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_query: Option<Vec<QueryRank>>,
}

impl RankingReport {
    pub fn from_ranks(split: &str, strategy: &str, ranks: Vec<QueryRank>) -> Self {
        let all = Metrics::from_ranks(ranks.iter().map(|q| q.rank));
        let present = Metrics::from_ranks(ranks.iter().filter(|q| q.present).map(|q| q.rank));
        let absent = Metrics::from_ranks(ranks.iter().filter(|q| !q.present).map(|q| q.rank));
        let coverage = if ranks.is_empty() {
            0.0
        } else {
            present.count as f64 / ranks.len() as f64
        };
        RankingReport {
            split: split.to_string(),
            strategy: strategy.to_string(),
            mrr: all.mrr,
            hits1: all.hits1,
            hits3: all.hits3,
            hits10: all.hits10,
            coverage,
            slices: Slices { present, absent },
            per_query: Some(ranks),
        }
    }

    pub fn count(&self) -> usize {
        self.slices.present.count + self.slices.absent.count
    }

    pub fn without_per_query(mut self) -> Self {
        self.per_query = None;
        self
    }
}
