use crate::error::{Error, Result};
use crate::kg::Query;
use crate::numerics::{Real, Tensor, Var};
use crate::reader::layers::{cross_attention_layer, self_attention_layer, Session};
use crate::reader::{
    build_attention_mask, build_tokens, build_tokens_with_query_edge, AttentionMask, Lookup, ModelParams, Segment,
    Token, TokenKind, TokenSequence,
};
use crate::retriever::SubgraphContext;

/// Reader input for one query: tokens and the attention structure they get.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub query: Query,
    pub seq: TokenSequence,
    pub mask: AttentionMask,
}

impl Prepared {
    /// Tokenizes `ctx` for the given ablation flags.
    pub fn new(ctx: &SubgraphContext, no_query_repr: bool, full_attention: bool) -> Result<Self> {
        let seq = if no_query_repr {
            build_tokens_with_query_edge(ctx)?
        } else {
            build_tokens(ctx)?
        };
        let mask = if full_attention {
            AttentionMask::full(seq.len())
        } else {
            build_attention_mask(&seq)
        };
        Ok(Prepared {
            query: ctx.query,
            seq,
            mask,
        })
    }

    pub fn for_model<F: Real>(ctx: &SubgraphContext, params: &ModelParams<F>) -> Result<Self> {
        let cfg = params.config();
        Self::new(ctx, cfg.no_query_repr, cfg.full_attention)
    }

    pub fn size(&self) -> usize {
        self.seq.len()
    }
}

/// Lookup + type + segment rows for `tokens`, in order. No position term.
pub fn embed_tokens<F: Real>(s: &mut Session<'_, F>, tokens: &[Token]) -> Result<Var> {
    let params = s.params();
    let ids = params.ids();
    let cfg = params.config();
    let mut parts = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        // consecutive tokens reading from the same table share one gather
        let table_of = |l: &Lookup| match l {
            Lookup::Entity(_) => ids.entity_table,
            Lookup::Relation(_) => ids.relation_table,
            Lookup::Mask => ids.mask_token_vector,
            Lookup::Cls => ids.cls_vector,
        };
        let table = table_of(&tokens[i].lookup);
        let mut rows = Vec::new();
        while i < tokens.len() && table_of(&tokens[i].lookup) == table {
            let row = match tokens[i].lookup {
                Lookup::Entity(e) if e.index() < cfg.num_entities => e.index(),
                Lookup::Relation(r) if r.index() < cfg.num_relations => r.index(),
                Lookup::Mask | Lookup::Cls => 0,
                other => return Err(Error::InvalidArgument(format!("token {other:?} out of vocabulary range"))),
            };
            rows.push(row);
            i += 1;
        }
        let t = s.p(table);
        parts.push(s.graph.gather_rows(t, &rows)?);
    }
    let lookup = if parts.len() == 1 { parts[0] } else { s.graph.concat_rows(&parts)? };
    let kinds: Vec<usize> = tokens.iter().map(|t| t.kind as usize).collect();
    let segments: Vec<usize> = tokens.iter().map(|t| t.segment as usize).collect();
    let type_table = s.p(ids.type_table);
    let segment_table = s.p(ids.segment_table);
    let types = s.graph.gather_rows(type_table, &kinds)?;
    let segs = s.graph.gather_rows(segment_table, &segments)?;
    let x = s.graph.add(lookup, types)?;
    s.graph.add(x, segs)
}

pub fn embed_subgraph<F: Real>(s: &mut Session<'_, F>, seq: &TokenSequence) -> Result<Var> {
    embed_tokens(s, &seq.tokens)
}

/// The three query-tower tokens: `[CLS]`, source entity, query relation.
pub fn query_tokens(query: &Query) -> [Token; 3] {
    [
        Token {
            lookup: Lookup::Cls,
            kind: TokenKind::Entity,
            segment: Segment::Other,
        },
        Token {
            lookup: Lookup::Entity(query.source),
            kind: TokenKind::Entity,
            segment: Segment::Other,
        },
        Token {
            lookup: Lookup::Relation(query.relation),
            kind: TokenKind::Relation,
            segment: Segment::Other,
        },
    ]
}

pub fn embed_query<F: Real>(s: &mut Session<'_, F>, query: &Query) -> Result<Var> {
    embed_tokens(s, &query_tokens(query))
}

/// `concat(fused, source) W_head^T`, then inner products with every entity
/// row. The entity table doubles as the output layer.
pub fn score_entities<F: Real>(s: &mut Session<'_, F>, fused: Var, source: Var) -> Result<Var> {
    let ids = s.params().ids();
    let joined = s.graph.concat_cols(&[fused, source])?;
    let feature = s.linear(joined, ids.head)?;
    let table = s.p(ids.entity_table);
    s.graph.matmul_nt(feature, table)
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub logits: Var,
    pub fused_query_repr: Var,
    pub source_ctx_repr: Var,
}

/// Runs the reader on the tape of `s`.
///
/// The query tower self-attends over its three tokens, the subgraph tower
/// attends under `input.mask`, and the fusion stack lets query rows attend
/// to the final subgraph rows. Ablation flags come from the model config.
pub fn forward_on<F: Real>(s: &mut Session<'_, F>, input: &Prepared) -> Result<ForwardVars> {
    let params = s.params();
    let cfg = params.config();
    let ids = params.ids();
    if cfg.no_query_repr != input.seq.mask_position().is_some() {
        return Err(Error::InvalidArgument(
            "input was tokenized for a different no_query_repr setting".into(),
        ));
    }

    let mut q = None;
    if !cfg.no_query_repr {
        let mut x = embed_query(s, &input.query)?;
        for block in &ids.query {
            x = self_attention_layer(s, x, block, None)?.0;
        }
        q = Some(x);
    }

    let mut sub = None;
    if !cfg.no_subgraph_repr {
        let mut x = embed_subgraph(s, &input.seq)?;
        let allow = input.mask.as_allow();
        for block in &ids.subgraph {
            x = self_attention_layer(s, x, block, Some(allow))?.0;
        }
        sub = Some(x);
    }

    let (fused, source) = match (q, sub) {
        (Some(q), None) => {
            let cls = s.graph.gather_rows(q, &[0])?;
            let zero = s.graph.leaf(Tensor::zeros(&[1, cfg.hidden]));
            (cls, zero)
        }
        (None, Some(x)) => {
            let pos = input.seq.mask_position().expect("checked above");
            let mask_row = s.graph.gather_rows(x, &[pos])?;
            let src = s.graph.gather_rows(x, &[0])?;
            (mask_row, src)
        }
        (Some(mut q), Some(x)) => {
            if !cfg.no_cross_attention {
                for block in &ids.cross {
                    q = cross_attention_layer(s, q, x, block)?.0;
                }
            }
            let cls = s.graph.gather_rows(q, &[0])?;
            let src = s.graph.gather_rows(x, &[0])?;
            (cls, src)
        }
        (None, None) => unreachable!("config validation rejects this"),
    };
    let logits = score_entities(s, fused, source)?;
    Ok(ForwardVars {
        logits,
        fused_query_repr: fused,
        source_ctx_repr: source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReaderOutput<F> {
    pub logits: Vec<F>,
    pub fused_query_repr: Vec<F>,
    pub source_ctx_repr: Vec<F>,
}

/// Scores for every entity given a prepared input.
pub fn forward_prepared<F: Real>(params: &ModelParams<F>, input: &Prepared) -> Result<ReaderOutput<F>> {
    let mut s = Session::new(params);
    let v = forward_on(&mut s, input)?;
    let out = ReaderOutput {
        logits: s.graph.value(v.logits).data().to_vec(),
        fused_query_repr: s.graph.value(v.fused_query_repr).data().to_vec(),
        source_ctx_repr: s.graph.value(v.source_ctx_repr).data().to_vec(),
    };
    if !out.logits.iter().all(|x| x.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    Ok(out)
}

pub fn forward<F: Real>(params: &ModelParams<F>, ctx: &SubgraphContext) -> Result<ReaderOutput<F>> {
    forward_prepared(params, &Prepared::for_model(ctx, params)?)
}

/// Cross-entropy of one example and its parameter gradients.
pub fn loss_and_grads<F: Real>(
    params: &ModelParams<F>,
    input: &Prepared,
    gold: usize,
    dropout_seed: Option<u64>,
) -> Result<(F, Vec<Option<Tensor<F>>>)> {
    let mut s = Session::new(params);
    if let Some(seed) = dropout_seed {
        s = s.with_dropout(seed);
    }
    let v = forward_on(&mut s, input)?;
    let loss = s.graph.cross_entropy(v.logits, &[gold])?;
    let value = s.graph.value(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {value} for gold {gold}")));
    }
    let mut grads = s.graph.backward(loss)?;
    Ok((value, s.param_grads(&mut grads)))
}

/// Cross-entropy of one example without gradients.
pub fn loss<F: Real>(params: &ModelParams<F>, input: &Prepared, gold: usize) -> Result<F> {
    let mut s = Session::new(params);
    let v = forward_on(&mut s, input)?;
    let loss = s.graph.cross_entropy(v.logits, &[gold])?;
    Ok(s.graph.value(loss).data()[0])
}
