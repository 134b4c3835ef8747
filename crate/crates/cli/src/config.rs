//! Run configuration: built-in defaults, then a TOML file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use kgrr_core::kg::Split;
use kgrr_core::reader::ModelConfig;
use kgrr_core::retriever::{RetrieverConfig, Strategy};
use kgrr_core::train::TrainConfig;

/// Everything a run needs. Every field has a default; unknown keys are
/// rejected.
///
/// ```toml
/// data = "data/desk"
/// runs_dir = "runs"
/// eval_split = "test"
///
/// [retriever]
/// strategy = "bfs"
/// budget = 100
///
/// [model]
/// hidden = 32
///
/// [train]
/// epochs = 30
/// optimizer = { peak_lr = 0.002 }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Directory with `train.txt`, and optionally `valid.txt` and `test.txt`.
    pub data: PathBuf,
    /// Parent of the per-run output directories.
    pub runs_dir: PathBuf,
    /// Context cache directory; contexts are recomputed when unset.
    /// `prepare` writes here, or to `<data>/prepared` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    /// Path file for the `paths` strategy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<PathBuf>,
    pub eval_split: Split,
    pub retriever: RetrieverConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: PathBuf::from("data"),
            runs_dir: PathBuf::from("runs"),
            cache: None,
            paths: None,
            eval_split: Split::Test,
            retriever: RetrieverConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            anyhow::anyhow!("line {line}: {}", e.message())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// First 12 hex digits of the SHA-256 of the config snapshot and the
    /// training split, so a rerun of the same experiment maps to the same id.
    /// Where outputs and caches go does not count.
    pub fn run_id(&self, train_hash: &str) -> Result<String> {
        let experiment = RunConfig {
            runs_dir: PathBuf::new(),
            cache: None,
            ..self.clone()
        };
        let mut h = Sha256::new();
        h.update(experiment.to_toml()?.as_bytes());
        h.update(train_hash.as_bytes());
        Ok(hex::encode(h.finalize())[..12].to_string())
    }
}

/// Flags shared by the subcommands that run a configured experiment.
/// Each one, when given, overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML run config; flags override its values.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Parent directory for run outputs.
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
    /// Context cache directory.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Path file (JSON Lines) for the `paths` strategy.
    #[arg(long)]
    pub paths: Option<PathBuf>,
    /// Retrieval strategy: bfs, onehop, paths or beam.
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// Edge budget per context.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Seed for retrieval sampling, parameter init and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub beam_width: Option<usize>,
    #[arg(long)]
    pub max_hops: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub ffn_dim: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Peak learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Keep the epoch with the best validation MRR.
    #[arg(long)]
    pub select_on_valid: bool,
    /// Split to evaluate on: train, valid or test.
    #[arg(long)]
    pub split: Option<Split>,
}

impl Overrides {
    /// Defaults, then the config file if any, then every flag that was set.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        self.apply(&mut c);
        Ok(c)
    }

    pub fn apply(&self, c: &mut RunConfig) {
        fn set<T: Clone>(dst: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *dst = v.clone();
            }
        }
        set(&mut c.data, &self.data);
        set(&mut c.runs_dir, &self.runs_dir);
        if self.cache.is_some() {
            c.cache = self.cache.clone();
        }
        if self.paths.is_some() {
            c.paths = self.paths.clone();
        }
        set(&mut c.eval_split, &self.split);
        let r = &mut c.retriever;
        set(&mut r.strategy, &self.strategy);
        set(&mut r.budget, &self.budget);
        set(&mut r.seed, &self.seed);
        set(&mut r.beam_width, &self.beam_width);
        set(&mut r.max_hops, &self.max_hops);
        let m = &mut c.model;
        set(&mut m.layers, &self.layers);
        set(&mut m.heads, &self.heads);
        set(&mut m.hidden, &self.hidden);
        set(&mut m.ffn_dim, &self.ffn_dim);
        set(&mut m.dropout, &self.dropout);
        let t = &mut c.train;
        set(&mut t.seed, &self.seed);
        set(&mut t.optimizer.peak_lr, &self.lr);
        set(&mut t.epochs, &self.epochs);
        set(&mut t.batch_size, &self.batch_size);
        if self.steps.is_some() {
            t.max_steps = self.steps;
        }
        if self.select_on_valid {
            t.select_on_valid = true;
        }
    }
}
