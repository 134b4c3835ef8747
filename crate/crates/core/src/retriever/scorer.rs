use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kg::{EntityId, KnowledgeGraph, Query, Triple};
use crate::retriever::{composition_rules, PathScorer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TranslationalConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub margin: f64,
    pub seed: u64,
    /// Learning-rate multiplier of the path-composition term; 0 disables it.
    pub path_weight: f64,
    /// Weight of the end-entity residual in path scores.
    pub entity_weight: f64,
}

impl Default for TranslationalConfig {
    fn default() -> Self {
        TranslationalConfig {
            dim: 32,
            epochs: 100,
            lr: 0.01,
            margin: 1.0,
            seed: 0,
            path_weight: 1.0,
            entity_weight: 0.0,
        }
    }
}

/// Path heuristic over translational embeddings (`h + r ~ t`) fitted to the
/// augmented training triples. Relation sums of mined composition rules
/// (see [`composition_rules`]) are also pulled towards the rule's head
/// relation, weighted by confidence.
///
/// A path `s -r1-> .. -rk-> e` for query `(s, q)` scores
/// `2 <R_q, sum R_i> - |sum R_i|^2 - w |E_s + R_q - E_e|^2`, i.e. the negated
/// squared residuals of the relation composition against the query relation
/// and of the end entity against the translated source, shifted by the
/// constant `|R_q|^2`.
#[derive(Debug, Clone)]
pub struct TranslationalScorer {
    dim: usize,
    entity: Vec<f64>,
    relation: Vec<f64>,
    entity_weight: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

impl TranslationalScorer {
    /// Margin-ranking SGD with one corrupted head or tail per triple.
    pub fn train(kg: &KnowledgeGraph, cfg: &TranslationalConfig) -> Self {
        let dim = cfg.dim.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let bound = 6.0 / (dim as f64).sqrt();
        let mut entity: Vec<f64> = (0..kg.num_entities() * dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let mut relation: Vec<f64> = (0..kg.num_relations() * dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        relation.chunks_mut(dim).for_each(normalize);

        let n_ent = kg.num_entities();
        let n_rel = kg.num_relations();
        let mut rules: Vec<([usize; 3], f64)> = if cfg.path_weight > 0.0 {
            composition_rules(kg)
                .into_iter()
                .map(|(r, w)| ([r[0].index(), r[1].index(), r[2].index()], w))
                .collect()
        } else {
            Vec::new()
        };
        let mut order: Vec<Triple> = kg.triples().to_vec();
        let mut d_pos = vec![0.0; dim];
        let mut d_neg = vec![0.0; dim];
        for _ in 0..cfg.epochs {
            entity.chunks_mut(dim).for_each(normalize);
            order.shuffle(&mut rng);
            for t in &order {
                if n_ent < 2 {
                    break;
                }
                let other = EntityId(rng.random_range(0..n_ent as u32));
                let neg = if rng.random_bool(0.5) {
                    Triple { tail: other, ..*t }
                } else {
                    Triple { head: other, ..*t }
                };
                if neg == *t || kg.in_train(&neg) {
                    continue;
                }
                let (h, r, tl) = (t.head.index(), t.relation.index(), t.tail.index());
                let (nh, nt) = (neg.head.index(), neg.tail.index());
                let mut pos_d = 0.0;
                let mut neg_d = 0.0;
                for k in 0..dim {
                    d_pos[k] = entity[h * dim + k] + relation[r * dim + k] - entity[tl * dim + k];
                    d_neg[k] = entity[nh * dim + k] + relation[r * dim + k] - entity[nt * dim + k];
                    pos_d += d_pos[k] * d_pos[k];
                    neg_d += d_neg[k] * d_neg[k];
                }
                if cfg.margin + pos_d - neg_d <= 0.0 {
                    continue;
                }
                let step = 2.0 * cfg.lr;
                for k in 0..dim {
                    entity[h * dim + k] -= step * d_pos[k];
                    entity[tl * dim + k] += step * d_pos[k];
                    relation[r * dim + k] -= step * (d_pos[k] - d_neg[k]);
                    entity[nh * dim + k] += step * d_neg[k];
                    entity[nt * dim + k] -= step * d_neg[k];
                }
            }
            rules.shuffle(&mut rng);
            for &([r1, r2, q], weight) in &rules {
                let nq = rng.random_range(0..n_rel);
                if nq == q {
                    continue;
                }
                let mut pos_d = 0.0;
                let mut neg_d = 0.0;
                for k in 0..dim {
                    let c = relation[r1 * dim + k] + relation[r2 * dim + k];
                    d_pos[k] = c - relation[q * dim + k];
                    d_neg[k] = c - relation[nq * dim + k];
                    pos_d += d_pos[k] * d_pos[k];
                    neg_d += d_neg[k] * d_neg[k];
                }
                // The positive residual is always pulled in; the corrupted
                // relation is pushed away only inside the margin.
                let push = if cfg.margin + pos_d - neg_d > 0.0 { 1.0 } else { 0.0 };
                let step = 2.0 * cfg.lr * cfg.path_weight * weight;
                for k in 0..dim {
                    let g = d_pos[k] - push * d_neg[k];
                    relation[r1 * dim + k] -= step * g;
                    relation[r2 * dim + k] -= step * g;
                    relation[q * dim + k] += step * d_pos[k];
                    relation[nq * dim + k] -= push * step * d_neg[k];
                }
            }
        }
        TranslationalScorer {
            dim,
            entity,
            relation,
            entity_weight: cfg.entity_weight,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entity(&self, e: EntityId) -> &[f64] {
        &self.entity[e.index() * self.dim..(e.index() + 1) * self.dim]
    }

    pub fn relation(&self, r: crate::kg::RelationId) -> &[f64] {
        &self.relation[r.index() * self.dim..(r.index() + 1) * self.dim]
    }

    /// Squared translational distance of a triple; lower is more plausible.
    pub fn distance(&self, t: &Triple) -> f64 {
        let h = self.entity(t.head);
        let r = self.relation(t.relation);
        let tl = self.entity(t.tail);
        h.iter()
            .zip(r)
            .zip(tl)
            .map(|((h, r), t)| (h + r - t) * (h + r - t))
            .sum()
    }
}

impl PathScorer for TranslationalScorer {
    fn score(&self, query: &Query, path: &[Triple]) -> f64 {
        let rq = self.relation(query.relation);
        let mut composed = vec![0.0; self.dim];
        for t in path {
            for (c, r) in composed.iter_mut().zip(self.relation(t.relation)) {
                *c += r;
            }
        }
        let end = path.last().map_or(query.source, |t| t.tail);
        let src = self.entity(query.source);
        let predicted: Vec<f64> = src.iter().zip(rq).map(|(s, r)| s + r).collect();
        -sq_dist(&composed, rq) - self.entity_weight * sq_dist(&predicted, self.entity(end))
    }
}
