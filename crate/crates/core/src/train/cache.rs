use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kg::{Dataset, Split, Triple};
use crate::retriever::{read_contexts, write_contexts, Retriever, RetrieverConfig, SubgraphContext};
use crate::train::split_contexts;

/// Hex SHA-256 of a split's triples in order.
pub fn split_hash(triples: &[Triple]) -> String {
    let mut h = Sha256::new();
    for t in triples {
        for v in [t.head.0, t.relation.0, t.tail.0] {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Names a cached context file: the full retriever config (strategy,
/// budget, seed and search settings), the split contents, and `extra` for
/// inputs outside the config such as a path file digest.
pub fn cache_key(config: &RetrieverConfig, split_hash: &str, extra: &str) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    h.update(split_hash.as_bytes());
    h.update(extra.as_bytes());
    Ok(hex::encode(&h.finalize()[..8]))
}

/// Contexts for `split`, read from `dir` when a file with the matching key
/// exists and written there otherwise.
pub fn cached_contexts(
    dir: &Path,
    data: &Dataset,
    retriever: &Retriever,
    split: Split,
    extra: &str,
) -> Result<Vec<SubgraphContext>> {
    let key = cache_key(retriever.config(), &split_hash(data.split(split)), extra)?;
    let path = dir.join(format!("contexts-{split}-{key}.jsonl"));
    if path.exists() {
        return read_contexts(&path);
    }
    let contexts = split_contexts(data, retriever, split)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_contexts(&path, &contexts)?;
    Ok(contexts)
}
