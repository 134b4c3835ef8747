use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;
use sha2::{Digest, Sha256};

use kgrr_core::kg::{Dataset, Query, Split};
use kgrr_core::reader::{load_checkpoint, save_checkpoint, ModelParams};
use kgrr_core::retriever::{
    coverage_stats, read_contexts, read_path_file, write_contexts, Retriever, RetrieverConfig, Strategy,
    SubgraphContext,
};
use kgrr_core::synth::{desk_splits, generate, SynthConfig};
use kgrr_core::train::{
    ablation_suite, build_train_instances, cached_contexts, evaluate, sized_for, split_contexts, split_hash,
    train as train_reader, write_loss_csv, ReaderVariant,
};

use crate::config::{Overrides, RunConfig};
use crate::SynthArgs;

pub const CONFIG_FILE: &str = "config.toml";
pub const MODEL_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";

fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    Dataset::load(&cfg.data).with_context(|| format!("loading dataset {}", cfg.data.display()))
}

fn build_retriever(cfg: &RunConfig, retriever: &RetrieverConfig, data: &Dataset) -> Result<Retriever> {
    if retriever.strategy == Strategy::Paths {
        let file = cfg.paths.as_ref().ok_or_else(|| anyhow!("strategy paths needs --paths FILE"))?;
        let paths = read_path_file(file).with_context(|| format!("reading path file {}", file.display()))?;
        return Ok(Retriever::with_paths(retriever.clone(), paths));
    }
    Ok(Retriever::new(retriever.clone(), &data.graph)?)
}

/// Cache key extra: the path file contents, which the config only names.
fn path_file_digest(cfg: &RunConfig) -> Result<String> {
    match &cfg.paths {
        Some(p) if cfg.retriever.strategy == Strategy::Paths => {
            let bytes = fs::read(p).with_context(|| format!("reading path file {}", p.display()))?;
            Ok(hex::encode(Sha256::digest(&bytes)))
        }
        _ => Ok(String::new()),
    }
}

fn contexts_for(cfg: &RunConfig, data: &Dataset, retriever: &Retriever, split: Split) -> Result<Vec<SubgraphContext>> {
    match &cfg.cache {
        Some(dir) => Ok(cached_contexts(dir, data, retriever, split, &path_file_digest(cfg)?)?),
        None => Ok(split_contexts(data, retriever, split)?),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn prepare(o: &Overrides) -> Result<()> {
    let cfg = o.resolve()?;
    let data = load_data(&cfg)?;
    let dir = cfg.cache.clone().unwrap_or_else(|| cfg.data.join("prepared"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    data.vocab.save(&dir)?;
    let summary = json!({
        "entities": data.graph.num_entities(),
        "relations": data.graph.num_relations(),
        "original_relations": data.graph.num_original_relations(),
        "indexed_edges": data.graph.triples().len(),
        "triples": {"train": data.train.len(), "valid": data.valid.len(), "test": data.test.len()},
        "split_hashes": {
            "train": split_hash(&data.train),
            "valid": split_hash(&data.valid),
            "test": split_hash(&data.test),
        },
    });
    write_json(&dir.join("graph.json"), &summary)?;
    let mut cached = 0;
    if cfg.cache.is_some() {
        let retriever = build_retriever(&cfg, &cfg.retriever, &data)?;
        for split in [Split::Train, Split::Valid, Split::Test] {
            if !data.split(split).is_empty() {
                cached += contexts_for(&cfg, &data, &retriever, split)?.len();
            }
        }
    }
    println!(
        "prepared {}: {} entities, {} relations, {} cached contexts",
        dir.display(),
        data.graph.num_entities(),
        data.graph.num_original_relations(),
        cached
    );
    Ok(())
}

pub fn retrieve(o: &Overrides, out: &Path, query: Option<&[String]>) -> Result<()> {
    let cfg = o.resolve()?;
    let data = load_data(&cfg)?;
    let retriever = build_retriever(&cfg, &cfg.retriever, &data)?;
    let contexts = match query {
        Some([source, relation]) => {
            let s = data.vocab.entity(source).ok_or_else(|| anyhow!("unknown entity {source:?}"))?;
            let r = data.vocab.relation(relation).ok_or_else(|| anyhow!("unknown relation {relation:?}"))?;
            vec![retriever.retrieve(&data.graph, &Query::new(s, r), false)?]
        }
        Some(_) => bail!("--query takes a source entity and a relation"),
        None => contexts_for(&cfg, &data, &retriever, cfg.eval_split)?,
    };
    write_contexts(out, &contexts)?;
    let coverage = if query.is_some() { None } else { Some(coverage_stats(&contexts)?) };
    println!(
        "wrote {} contexts to {}{}",
        contexts.len(),
        out.display(),
        coverage.map_or(String::new(), |c| format!(", target coverage {c:.3}"))
    );
    Ok(())
}

/// Trains into `<runs_dir>/<run id>` and returns that directory.
pub fn train(o: &Overrides) -> Result<PathBuf> {
    let cfg = o.resolve()?;
    let data = load_data(&cfg)?;
    let run_id = cfg.run_id(&split_hash(&data.train))?;
    let dir = cfg.runs_dir.join(&run_id);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_toml()?)?;

    let retriever = build_retriever(&cfg, &cfg.retriever, &data)?;
    let instances = build_train_instances(&data.graph, &retriever, &data.train)?;
    let valid = if cfg.train.select_on_valid && !data.valid.is_empty() {
        Some(contexts_for(&cfg, &data, &retriever, Split::Valid)?)
    } else {
        None
    };
    let model = sized_for(&cfg.model, &data.graph);
    let mut params = ModelParams::<f32>::init(&model, cfg.train.seed)?;
    let mut kept: Option<(usize, f64)> = None;
    let mut last = 0;
    let records = train_reader(&mut params, &instances, &cfg.train, |epoch, step, p| {
        let meta = json!({"run_id": run_id, "epoch": epoch, "step": step});
        save_checkpoint(&dir.join(format!("epoch-{epoch:03}.ckpt")), p, meta)?;
        if let Some(valid) = &valid {
            let mrr = evaluate(p, &data.graph, valid, "valid", retriever.config().strategy.as_str())?.mrr;
            if kept.is_none_or(|(_, best)| mrr > best) {
                kept = Some((epoch, mrr));
            }
        }
        last = epoch;
        Ok(())
    })?;
    write_loss_csv(&dir.join(LOSS_FILE), &records)?;
    let epoch = kept.map_or(last, |(e, _)| e);
    fs::copy(dir.join(format!("epoch-{epoch:03}.ckpt")), dir.join(MODEL_FILE))?;
    write_json(
        &dir.join("run.json"),
        &json!({
            "run_id": run_id,
            "steps": records.len(),
            "epochs": last,
            "kept_epoch": epoch,
            "valid_mrr": kept.map(|(_, m)| m),
            "final_loss": records.last().map(|r| r.loss),
        }),
    )?;
    println!("run {run_id}: {} steps, kept epoch {epoch}, outputs in {}", records.len(), dir.display());
    Ok(dir)
}

pub struct EvalRequest {
    pub run_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub contexts: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub per_query: bool,
    pub overrides: Overrides,
}

pub fn eval(req: &EvalRequest) -> Result<()> {
    let snapshot = req.run_dir.as_ref().map(|d| d.join(CONFIG_FILE));
    let mut cfg = match (&req.overrides.config, &snapshot) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(p)) => RunConfig::load(p)?,
        (None, None) => RunConfig::default(),
    };
    req.overrides.apply(&mut cfg);
    let ckpt = req
        .checkpoint
        .clone()
        .or_else(|| req.run_dir.as_ref().map(|d| d.join(MODEL_FILE)))
        .ok_or_else(|| anyhow!("eval needs --run-dir or --checkpoint"))?;
    let (params, _) = load_checkpoint::<f32>(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let data = load_data(&cfg)?;
    let mc = params.config();
    if mc.num_entities != data.graph.num_entities() || mc.num_relations != data.graph.num_relations() {
        bail!(
            "checkpoint has {} entities and {} relations, dataset has {} and {}",
            mc.num_entities,
            mc.num_relations,
            data.graph.num_entities(),
            data.graph.num_relations()
        );
    }
    let split = cfg.eval_split;
    let (contexts, strategy) = match &req.contexts {
        Some(file) => {
            let c = read_contexts(file).with_context(|| format!("reading contexts {}", file.display()))?;
            let s = c.first().map_or(cfg.retriever.strategy, |c| c.provenance.strategy);
            (c, s)
        }
        None => {
            let retriever = build_retriever(&cfg, &cfg.retriever, &data)?;
            (contexts_for(&cfg, &data, &retriever, split)?, cfg.retriever.strategy)
        }
    };
    let mut report = evaluate(&params, &data.graph, &contexts, &split.to_string(), strategy.as_str())?;
    if !req.per_query {
        report = report.without_per_query();
    }
    let out = match (&req.metrics, &req.run_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => d.join(format!("metrics-{split}.json")),
        (None, None) => bail!("eval needs --metrics FILE when no --run-dir is given"),
    };
    write_json(&out, &report)?;
    println!(
        "{split} {strategy}: mrr {:.4} hits@1 {:.4} hits@3 {:.4} hits@10 {:.4} coverage {:.3} ({} queries) -> {}",
        report.mrr,
        report.hits1,
        report.hits3,
        report.hits10,
        report.coverage,
        report.count(),
        out.display()
    );
    Ok(())
}

pub fn ablate(o: &Overrides, strategies: &[Strategy]) -> Result<()> {
    let cfg = o.resolve()?;
    let data = load_data(&cfg)?;
    let names: Vec<&str> = strategies.iter().map(|s| s.as_str()).collect();
    let run_id = cfg.run_id(&(split_hash(&data.train) + &names.join(",")))?;
    let dir = cfg.runs_dir.join(format!("ablate-{run_id}"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    let retrievers = strategies
        .iter()
        .map(|&strategy| {
            let rc = RetrieverConfig {
                strategy,
                ..cfg.retriever.clone()
            };
            Ok((strategy.as_str().to_string(), build_retriever(&cfg, &rc, &data)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = ablation_suite(&data, &cfg.model, &cfg.train, &retrievers, &ReaderVariant::ALL, cfg.eval_split)?;
    write_json(&dir.join("ablation.json"), &rows)?;
    println!("{:<20} {:<8} {:>7} {:>7} {:>7}", "reader", "context", "mrr", "hits@1", "hits@10");
    for r in &rows {
        println!(
            "{:<20} {:<8} {:>7.4} {:>7.4} {:>7.4}",
            r.reader.as_str(),
            r.retriever,
            r.report.mrr,
            r.report.hits1,
            r.report.hits10
        );
    }
    println!("wrote {}", dir.join("ablation.json").display());
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let splits = if a.desk {
        desk_splits()
    } else {
        let mut c = SynthConfig::default();
        if let Some(v) = a.entities {
            c.entities = v;
        }
        if let Some(v) = a.seed {
            c.seed = v;
        }
        if let Some(v) = a.rules {
            c.rules = v;
        }
        if let Some(v) = a.noise_relations {
            c.noise_relations = v;
        }
        if let Some(v) = a.alias_fraction {
            c.alias_fraction = v;
        }
        generate(&c)?
    };
    splits.write(&a.out)?;
    println!(
        "wrote {}: {} train, {} valid, {} test triples",
        a.out.display(),
        splits.train.len(),
        splits.valid.len(),
        splits.test.len()
    );
    Ok(())
}
