//! Attention sublayers on a [`Session`] tape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::{AllowMask, Gradients, Graph, Real, Tensor, Var};
use crate::reader::{BlockIds, ModelParams, ParamId};

/// A forward pass in progress: the tape plus lazily bound parameters.
pub struct Session<'p, F: Real> {
    pub graph: Graph<'p, F>,
    params: &'p ModelParams<F>,
    bound: Vec<Option<Var>>,
    dropout: Option<(F, ChaCha8Rng)>,
}

impl<'p, F: Real> Session<'p, F> {
    pub fn new(params: &'p ModelParams<F>) -> Self {
        Session {
            graph: Graph::new(),
            params,
            bound: vec![None; params.tensors().len()],
            dropout: None,
        }
    }

    /// Enables inverted dropout at the configured rate, seeded for replay.
    pub fn with_dropout(mut self, seed: u64) -> Self {
        let p = self.params.config().dropout;
        if p > 0.0 {
            self.dropout = Some((F::of(p), ChaCha8Rng::seed_from_u64(seed)));
        }
        self
    }

    pub fn params(&self) -> &'p ModelParams<F> {
        self.params
    }

    /// The tape node of a parameter, bound on first use.
    pub fn p(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id] {
            return v;
        }
        let v = self.graph.leaf_ref(self.params.get(id));
        self.bound[id] = Some(v);
        v
    }

    /// Parameter gradients in [`ModelParams`] order; `None` for parameters
    /// this pass never touched.
    pub fn param_grads(&self, grads: &mut Gradients<F>) -> Vec<Option<Tensor<F>>> {
        self.bound.iter().map(|b| b.and_then(|v| grads.take(v))).collect()
    }

    pub fn dropout(&mut self, x: Var) -> Result<Var> {
        let Some((p, rng)) = self.dropout.as_mut() else {
            return Ok(x);
        };
        let keep = F::one() / (F::one() - *p);
        let threshold = p.to_f64().unwrap_or(0.0);
        let shape = self.graph.value(x).shape().to_vec();
        let mask = Tensor::from_fn(&shape, |_| {
            if rng.random::<f64>() < threshold {
                F::zero()
            } else {
                keep
            }
        });
        let m = self.graph.leaf(mask);
        self.graph.mul(x, m)
    }

    /// `x W^T` for a weight stored output-major.
    pub fn linear(&mut self, x: Var, w: ParamId) -> Result<Var> {
        let w = self.p(w);
        self.graph.matmul_nt(x, w)
    }
}

/// Multi-head scaled dot-product attention without biases.
///
/// Queries are projected from `xq`, keys and values from `xkv`. `allow`
/// restricts which key rows each query row sees. Returns the projected
/// output (`rows(xq)` x d) and the per-head weight matrices.
pub fn multi_head_attention<F: Real>(
    s: &mut Session<'_, F>,
    xq: Var,
    xkv: Var,
    block: &BlockIds,
    allow: Option<&AllowMask>,
) -> Result<(Var, Vec<Var>)> {
    let heads = s.params().config().heads;
    let dk = s.params().config().head_dim();
    let q = s.linear(xq, block.q)?;
    let k = s.linear(xkv, block.k)?;
    let v = s.linear(xkv, block.v)?;
    let scale = F::one() / F::of(dk as f64).sqrt();
    let mut outputs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let g = &mut s.graph;
        let qh = g.slice_cols(q, h * dk, dk)?;
        let kh = g.slice_cols(k, h * dk, dk)?;
        let vh = g.slice_cols(v, h * dk, dk)?;
        let logits = g.matmul_nt(qh, kh)?;
        let logits = g.scale(logits, scale);
        let w = g.masked_softmax(logits, allow)?;
        outputs.push(g.matmul(w, vh)?);
        weights.push(w);
    }
    let joined = s.graph.concat_cols(&outputs)?;
    let out = s.linear(joined, block.o)?;
    Ok((out, weights))
}

/// Post-norm block: `LN(x + attn)`, then `LN(h + FFN(h))` with a GELU FFN.
pub fn attention_block<F: Real>(
    s: &mut Session<'_, F>,
    xq: Var,
    xkv: Var,
    block: &BlockIds,
    allow: Option<&AllowMask>,
) -> Result<(Var, Vec<Var>)> {
    let (attn, weights) = multi_head_attention(s, xq, xkv, block, allow)?;
    let attn = s.dropout(attn)?;
    let res = s.graph.add(xq, attn)?;
    let (g1, b1) = (s.p(block.ln1_gain), s.p(block.ln1_bias));
    let h = s.graph.layer_norm(res, g1, b1)?;

    let inner = s.linear(h, block.ffn_w1)?;
    let bias1 = s.p(block.ffn_b1);
    let inner = s.graph.add_row(inner, bias1)?;
    let inner = s.graph.gelu(inner);
    let outer = s.linear(inner, block.ffn_w2)?;
    let bias2 = s.p(block.ffn_b2);
    let outer = s.graph.add_row(outer, bias2)?;
    let outer = s.dropout(outer)?;
    let res = s.graph.add(h, outer)?;
    let (g2, b2) = (s.p(block.ln2_gain), s.p(block.ln2_bias));
    let out = s.graph.layer_norm(res, g2, b2)?;
    Ok((out, weights))
}

/// Self-attention block over `x` restricted by `allow`.
pub fn self_attention_layer<F: Real>(
    s: &mut Session<'_, F>,
    x: Var,
    block: &BlockIds,
    allow: Option<&AllowMask>,
) -> Result<(Var, Vec<Var>)> {
    attention_block(s, x, x, block, allow)
}

/// Query rows attend over every subgraph row.
pub fn cross_attention_layer<F: Real>(
    s: &mut Session<'_, F>,
    query_states: Var,
    subgraph_states: Var,
    block: &BlockIds,
) -> Result<(Var, Vec<Var>)> {
    attention_block(s, query_states, subgraph_states, block, None)
}
