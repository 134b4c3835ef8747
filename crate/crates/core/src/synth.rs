//! Desk-scale datasets: the fixed 8-triple fixture and a seeded generator of
//! compositional graphs.
//!
//! The generator plants base relations `p0, p1, ...`, noise relations
//! `n0, n1, ...` and goal relations `g_k = p_{2k} . p_{2k+1}`: whenever
//! `s -p_{2k}-> x -p_{2k+1}-> t` holds, so does `(s, g_k, t)`. Held-out goal
//! triples are always derivable through exactly one intermediate entity, so
//! a retriever that finds the two-hop path puts the answer in the context.
//! Optionally a share of goal facts also gets a one-hop alias `a_k`, which
//! neighbourhood retrieval can find.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{Dataset, Triple, Vocabulary, TEST_FILE, TRAIN_FILE, VALID_FILE};

/// The 8 desk triples over entities `a..f` and relations `r1..r3`.
pub const DESK_TRIPLES: [(&str, &str, &str); 8] = [
    ("a", "r1", "b"),
    ("b", "r2", "c"),
    ("a", "r1", "d"),
    ("d", "r2", "e"),
    ("e", "r3", "c"),
    ("a", "r3", "f"),
    ("f", "r1", "c"),
    ("b", "r3", "e"),
];

/// Named triples for the three splits, in file order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NamedSplits {
    pub train: Vec<[String; 3]>,
    pub valid: Vec<[String; 3]>,
    pub test: Vec<[String; 3]>,
}

impl NamedSplits {
    /// Writes `train.txt`, `valid.txt`, `test.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, rows) in [(TRAIN_FILE, &self.train), (VALID_FILE, &self.valid), (TEST_FILE, &self.test)] {
            let mut text = String::new();
            for [h, r, t] in rows {
                let _ = writeln!(text, "{h}\t{r}\t{t}");
            }
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Interns names (train first, then frozen) and indexes the graph.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let mut vocab = Vocabulary::new();
        let intern = |rows: &[[String; 3]], vocab: &mut Vocabulary| -> Result<Vec<Triple>> {
            rows.iter()
                .map(|[h, r, t]| {
                    Ok(Triple {
                        head: vocab.intern_entity(h)?,
                        relation: vocab.intern_relation(r)?,
                        tail: vocab.intern_entity(t)?,
                    })
                })
                .collect()
        };
        let train = intern(&self.train, &mut vocab)?;
        vocab.freeze();
        let valid = intern(&self.valid, &mut vocab)?;
        let test = intern(&self.test, &mut vocab)?;
        Dataset::from_parts(vocab, train, valid, test)
    }
}

fn named(h: &str, r: &str, t: &str) -> [String; 3] {
    [h.to_string(), r.to_string(), t.to_string()]
}

pub fn desk_splits() -> NamedSplits {
    NamedSplits {
        train: DESK_TRIPLES.iter().map(|(h, r, t)| named(h, r, t)).collect(),
        ..NamedSplits::default()
    }
}

/// The desk fixture as a dataset: entities `a..f` get ids `0..6`, relations
/// `r1, r2, r3` get `0, 1, 2` and their inverses `3, 4, 5`.
pub fn desk_kg() -> Dataset {
    desk_splits().to_dataset().expect("desk fixture is well formed")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub entities: usize,
    pub seed: u64,
    /// Number of composition rules; each consumes two base relations.
    pub rules: usize,
    /// Base relations that take part in no rule.
    pub extra_base_relations: usize,
    /// Probability that an entity has an outgoing edge of a given base relation.
    pub base_edge_prob: f64,
    pub noise_relations: usize,
    pub noise_edge_prob: f64,
    /// Fractions of uniquely derivable goal facts held out.
    pub valid_fraction: f64,
    pub test_fraction: f64,
    /// Probability that a goal fact `(s, g_k, t)`, held out or not, also
    /// appears in training as the one-hop alias `(s, a_k, t)`.
    pub alias_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            entities: 60,
            seed: 0,
            rules: 2,
            extra_base_relations: 1,
            base_edge_prob: 1.0,
            noise_relations: 2,
            noise_edge_prob: 0.5,
            valid_fraction: 0.15,
            test_fraction: 0.3,
            alias_fraction: 0.5,
        }
    }
}

/// Draws a compositional graph. Same config, same output, byte for byte.
pub fn generate(cfg: &SynthConfig) -> Result<NamedSplits> {
    if cfg.entities < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 entities, got {}",
            cfg.entities
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.entities;
    let width = (n - 1).to_string().len();
    let ent = |i: usize| format!("e{i:0width$}");
    let num_base = 2 * cfg.rules + cfg.extra_base_relations;

    let random_other = |rng: &mut ChaCha8Rng, e: usize| loop {
        let t = rng.random_range(0..n);
        if t != e {
            break t;
        }
    };

    // base[p] : set of (head, tail)
    let mut base: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); num_base];
    let mut train: Vec<[String; 3]> = Vec::new();
    for (p, edges) in base.iter_mut().enumerate() {
        for e in 0..n {
            if rng.random_bool(cfg.base_edge_prob) {
                let t = random_other(&mut rng, e);
                if edges.insert((e, t)) {
                    train.push(named(&ent(e), &format!("p{p}"), &ent(t)));
                }
            }
        }
    }
    for q in 0..cfg.noise_relations {
        let mut seen = BTreeSet::new();
        for e in 0..n {
            if rng.random_bool(cfg.noise_edge_prob) {
                let t = random_other(&mut rng, e);
                if seen.insert((e, t)) {
                    train.push(named(&ent(e), &format!("n{q}"), &ent(t)));
                }
            }
        }
    }

    let mut valid = Vec::new();
    let mut test = Vec::new();
    for k in 0..cfg.rules {
        let first = &base[2 * k];
        let second = &base[2 * k + 1];
        let mut succ: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(x, t) in second {
            succ.entry(x).or_default().push(t);
        }
        // (s, t) -> number of intermediates
        let mut derivations: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &(s, x) in first {
            for &t in succ.get(&x).map_or(&[][..], Vec::as_slice) {
                if t != s {
                    *derivations.entry((s, t)).or_default() += 1;
                }
            }
        }
        let mut unique: Vec<(usize, usize)> = derivations
            .iter()
            .filter(|(_, &c)| c == 1)
            .map(|(&st, _)| st)
            .collect();
        unique.shuffle(&mut rng);
        let n_test = (cfg.test_fraction * derivations.len() as f64).round() as usize;
        let n_valid = (cfg.valid_fraction * derivations.len() as f64).round() as usize;
        let n_test = n_test.min(unique.len());
        let n_valid = n_valid.min(unique.len() - n_test);
        let held_test: BTreeSet<_> = unique[..n_test].iter().copied().collect();
        let held_valid: BTreeSet<_> = unique[n_test..n_test + n_valid].iter().copied().collect();
        let rel = format!("g{k}");
        let alias = format!("a{k}");
        for &(s, t) in derivations.keys() {
            if cfg.alias_fraction > 0.0 && rng.random_bool(cfg.alias_fraction) {
                train.push(named(&ent(s), &alias, &ent(t)));
            }
            let row = named(&ent(s), &rel, &ent(t));
            if held_test.contains(&(s, t)) {
                test.push(row);
            } else if held_valid.contains(&(s, t)) {
                valid.push(row);
            } else {
                train.push(row);
            }
        }
    }

    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    valid.shuffle(&mut rng);

    // Keep the benchmark transductive.
    let seen: BTreeSet<&str> = train
        .iter()
        .flat_map(|[h, _, t]| [h.as_str(), t.as_str()])
        .collect();
    let known = |row: &[String; 3]| seen.contains(row[0].as_str()) && seen.contains(row[2].as_str());
    let valid = valid.iter().filter(|r| known(r)).cloned().collect();
    let test = test.iter().filter(|r| known(r)).cloned().collect();
    Ok(NamedSplits { train, valid, test })
}
