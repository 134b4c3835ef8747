//! The two-tower Transformer reader.
//!
//! A context becomes node tokens followed by edge tokens. The subgraph tower
//! self-attends under the graph-induced mask, the query tower over
//! `[CLS], source, relation`, and a cross-attention stack lets the query
//! rows read the subgraph. The fused `[CLS]` row and the source node row
//! are projected to a feature that is scored against every entity row.

mod checkpoint;
pub mod layers;
mod mask;
mod model;
mod params;
mod tokens;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Manifest, TensorEntry,
};
pub use layers::Session;
pub use mask::{build_attention_mask, AttentionMask};
pub use model::{
    embed_query, embed_subgraph, embed_tokens, forward, forward_on, forward_prepared, loss, loss_and_grads, query_tokens,
    score_entities, ForwardVars, Prepared, ReaderOutput,
};
pub use params::{BlockIds, ModelConfig, ModelParams, ParamId, ParamIds};
pub use tokens::{build_tokens, build_tokens_with_query_edge, Lookup, Segment, Token, TokenKind, TokenSequence};

use crate::error::Result;
use crate::numerics::gradcheck::relative_error;

/// Analytic loss gradients against central differences with step `eps`,
/// one relative error per parameter tensor.
pub fn gradient_check(params: &ModelParams<f64>, input: &Prepared, gold: usize, eps: f64) -> Result<Vec<(String, f64)>> {
    let (_, analytic) = loss_and_grads(params, input, gold, None)?;
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(analytic.len());
    for (i, a) in analytic.iter().enumerate() {
        let n = params.get(i).len();
        let mut numeric = Vec::with_capacity(n);
        for j in 0..n {
            let base = params.get(i).data()[j];
            probe.get_mut(i).data_mut()[j] = base + eps;
            let plus = loss(&probe, input, gold)?;
            probe.get_mut(i).data_mut()[j] = base - eps;
            let minus = loss(&probe, input, gold)?;
            probe.get_mut(i).data_mut()[j] = base;
            numeric.push((plus - minus) / (2.0 * eps));
        }
        let a = a.as_ref().map_or_else(|| vec![0.0; n], |t| t.data().to_vec());
        out.push((params.names()[i].clone(), relative_error(&a, &numeric)));
    }
    Ok(out)
}
