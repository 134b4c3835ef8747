//! Context and path files: JSON Lines, one record per query.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, Query, RelationId};
use crate::retriever::{validate_paths, Path, Provenance, Strategy, SubgraphContext};

/// One line of a context file.
///
/// `{"query": [source, relation], "edges": [[h, r, t], ...],
///   "terminals": [entity, ...], "paths": [[[h, r, t], ...], ...],
///   "strategy": "bfs"}`; `paths` is optional, and so is `target`, the gold
/// answer when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub query: [u32; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<u32>,
    pub edges: Vec<crate::kg::Triple>,
    pub terminals: Vec<EntityId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<Path>>,
    pub strategy: Strategy,
}

impl From<&SubgraphContext> for ContextRecord {
    fn from(c: &SubgraphContext) -> Self {
        ContextRecord {
            query: [c.query.source.0, c.query.relation.0],
            target: c.query.target.map(|t| t.0),
            edges: c.edges.clone(),
            terminals: c
                .nodes
                .iter()
                .zip(&c.terminal)
                .filter(|(_, &t)| t)
                .map(|(n, _)| *n)
                .collect(),
            paths: c.provenance.paths.clone(),
            strategy: c.provenance.strategy,
        }
    }
}

impl ContextRecord {
    pub fn query(&self) -> Query {
        Query {
            source: EntityId(self.query[0]),
            relation: RelationId(self.query[1]),
            target: self.target.map(EntityId),
        }
    }

    pub fn to_context(&self) -> Result<SubgraphContext> {
        let query = self.query();
        if let Some(paths) = &self.paths {
            validate_paths(query.source, paths)?;
        }
        let terminals: HashSet<EntityId> = self.terminals.iter().copied().collect();
        let ctx = SubgraphContext::from_edges(
            query,
            self.edges.clone(),
            &terminals,
            Provenance {
                strategy: self.strategy,
                paths: self.paths.clone(),
            },
        );
        ctx.validate()?;
        Ok(ctx)
    }
}

pub fn write_contexts(path: &FsPath, contexts: &[SubgraphContext]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for c in contexts {
        serde_json::to_writer(&mut w, &ContextRecord::from(c))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_records(path: &FsPath) -> Result<Vec<ContextRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ContextRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_contexts(path: &FsPath) -> Result<Vec<SubgraphContext>> {
    read_records(path)?.iter().map(ContextRecord::to_context).collect()
}

/// Reads precomputed paths keyed by `(source, relation)`. Records without a
/// `paths` field are rejected.
pub fn read_path_file(path: &FsPath) -> Result<HashMap<(EntityId, RelationId), Vec<Path>>> {
    let mut out = HashMap::new();
    for (i, rec) in read_records(path)?.into_iter().enumerate() {
        let q = rec.query();
        let paths = rec.paths.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: "record has no paths".into(),
        })?;
        validate_paths(q.source, &paths)?;
        out.insert((q.source, q.relation), paths);
    }
    Ok(out)
}
