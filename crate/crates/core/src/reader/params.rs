use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Shape and ablation switches of the reader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ffn_dim: usize,
    /// Filled in from the dataset when left at 0.
    pub num_entities: usize,
    /// Augmented count (originals plus inverses); filled in like `num_entities`.
    pub num_relations: usize,
    pub no_cross_attention: bool,
    pub full_attention: bool,
    pub no_subgraph_repr: bool,
    pub no_query_repr: bool,
    pub dropout: f64,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            heads: 4,
            hidden: 32,
            ffn_dim: 64,
            num_entities: 0,
            num_relations: 0,
            no_cross_attention: false,
            full_attention: false,
            no_subgraph_repr: false,
            no_query_repr: false,
            dropout: 0.0,
            init_std: 0.1,
        }
    }
}

impl ModelConfig {
    /// Full-size FB15K-237 reader: 3 layers, 8 heads, width 320, FFN 1280.
    pub fn benchmark(num_entities: usize, num_relations: usize) -> Self {
        ModelConfig {
            layers: 3,
            heads: 8,
            hidden: 320,
            ffn_dim: 1280,
            num_entities,
            num_relations,
            init_std: 0.02,
            ..ModelConfig::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.heads == 0 || self.hidden == 0 || self.hidden % self.heads != 0 {
            return bad(format!(
                "hidden {} must be a positive multiple of heads {}",
                self.hidden, self.heads
            ));
        }
        if self.ffn_dim == 0 {
            return bad("ffn_dim must be positive".into());
        }
        if self.num_entities == 0 || self.num_relations == 0 {
            return bad("entity and relation counts must be set".into());
        }
        if self.no_subgraph_repr && self.no_query_repr {
            return bad("no_subgraph_repr and no_query_repr leave nothing to score from".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return bad(format!("init_std {} must be positive", self.init_std));
        }
        Ok(())
    }
}

/// Index of one tensor in [`ModelParams`].
pub type ParamId = usize;

/// One Transformer block: attention projections, FFN and both norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockIds {
    pub q: ParamId,
    pub k: ParamId,
    pub v: ParamId,
    pub o: ParamId,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub ffn_w1: ParamId,
    pub ffn_b1: ParamId,
    pub ffn_w2: ParamId,
    pub ffn_b2: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamIds {
    pub entity_table: ParamId,
    pub relation_table: ParamId,
    pub type_table: ParamId,
    pub segment_table: ParamId,
    pub cls_vector: ParamId,
    pub mask_token_vector: ParamId,
    pub query: Vec<BlockIds>,
    pub subgraph: Vec<BlockIds>,
    pub cross: Vec<BlockIds>,
    pub head: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

struct LayoutBuilder {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    inits: Vec<Init>,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> ParamId {
        self.names.push(name);
        self.shapes.push(shape);
        self.inits.push(init);
        self.names.len() - 1
    }

    fn block(&mut self, prefix: &str, cfg: &ModelConfig) -> BlockIds {
        let (d, a, dk, f) = (cfg.hidden, cfg.heads, cfg.head_dim(), cfg.ffn_dim);
        let mut p = |n: &str, shape: Vec<usize>, init| self.add(format!("{prefix}.{n}"), shape, init);
        BlockIds {
            q: p("attn.q", vec![a, dk, d], Init::Normal),
            k: p("attn.k", vec![a, dk, d], Init::Normal),
            v: p("attn.v", vec![a, dk, d], Init::Normal),
            o: p("attn.o", vec![d, d], Init::Normal),
            ln1_gain: p("ln1.gain", vec![d], Init::Ones),
            ln1_bias: p("ln1.bias", vec![d], Init::Zeros),
            ffn_w1: p("ffn.w1", vec![f, d], Init::Normal),
            ffn_b1: p("ffn.b1", vec![f], Init::Zeros),
            ffn_w2: p("ffn.w2", vec![d, f], Init::Normal),
            ffn_b2: p("ffn.b2", vec![d], Init::Zeros),
            ln2_gain: p("ln2.gain", vec![d], Init::Ones),
            ln2_bias: p("ln2.bias", vec![d], Init::Zeros),
        }
    }
}

/// Every learned tensor of the reader, addressed through [`ParamIds`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    config: ModelConfig,
    ids: ParamIds,
    names: Vec<String>,
    tensors: Vec<Tensor<F>>,
}

fn layout(cfg: &ModelConfig) -> (ParamIds, LayoutBuilder) {
    let d = cfg.hidden;
    let mut b = LayoutBuilder {
        names: Vec::new(),
        shapes: Vec::new(),
        inits: Vec::new(),
    };
    let entity_table = b.add("entity_table".into(), vec![cfg.num_entities, d], Init::Normal);
    let relation_table = b.add("relation_table".into(), vec![cfg.num_relations, d], Init::Normal);
    let type_table = b.add("type_table".into(), vec![2, d], Init::Normal);
    let segment_table = b.add("segment_table".into(), vec![2, d], Init::Normal);
    let cls_vector = b.add("cls_vector".into(), vec![d], Init::Normal);
    let mask_token_vector = b.add("mask_token_vector".into(), vec![d], Init::Normal);
    let query = (0..cfg.layers).map(|l| b.block(&format!("query.{l}"), cfg)).collect();
    let subgraph = (0..cfg.layers).map(|l| b.block(&format!("subgraph.{l}"), cfg)).collect();
    let cross = (0..cfg.layers).map(|l| b.block(&format!("cross.{l}"), cfg)).collect();
    let head = b.add("head".into(), vec![d, 2 * d], Init::Normal);
    let ids = ParamIds {
        entity_table,
        relation_table,
        type_table,
        segment_table,
        cls_vector,
        mask_token_vector,
        query,
        subgraph,
        cross,
        head,
    };
    (ids, b)
}

impl<F: Real> ModelParams<F> {
    /// Gaussian weights with std `init_std`, unit norm gains, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (ids, b) = layout(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.init_std).map_err(|e| Error::Config(e.to_string()))?;
        let tensors = b
            .shapes
            .iter()
            .zip(&b.inits)
            .map(|(shape, init)| match init {
                Init::Normal => Tensor::from_fn(shape, |_| F::of(normal.sample(&mut rng))),
                Init::Zeros => Tensor::zeros(shape),
                Init::Ones => Tensor::filled(shape, F::one()),
            })
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            ids,
            names: b.names,
            tensors,
        })
    }

    /// Assembles parameters from named tensors, checking names and shapes
    /// against the layout implied by `config`.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Tensor<F>)>) -> Result<Self> {
        config.validate()?;
        let (ids, b) = layout(config);
        if named.len() != b.names.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                b.names.len(),
                named.len()
            )));
        }
        let mut by_name: std::collections::HashMap<String, Tensor<F>> = named.into_iter().collect();
        let mut tensors = Vec::with_capacity(b.names.len());
        for (name, shape) in b.names.iter().zip(&b.shapes) {
            let t = by_name
                .remove(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            tensors.push(t);
        }
        Ok(ModelParams {
            config: config.clone(),
            ids,
            names: b.names,
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn ids(&self) -> &ParamIds {
        &self.ids
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<F>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.tensors
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.tensors[id]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<F>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn cast<G: Real>(&self) -> ModelParams<G> {
        ModelParams {
            config: self.config.clone(),
            ids: self.ids.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            layers: 1,
            heads: 2,
            hidden: 8,
            ffn_dim: 16,
            num_entities: 6,
            num_relations: 6,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn head_width_must_divide() {
        let cfg = ModelConfig { heads: 3, ..tiny() };
        assert!(cfg.validate().is_err());
        assert!(ModelParams::<f64>::init(&cfg, 0).is_err());
    }

    #[test]
    fn layout_shapes() {
        let p = ModelParams::<f64>::init(&tiny(), 1).unwrap();
        let shape = |n: &str| p.by_name(n).unwrap().shape().to_vec();
        assert_eq!(shape("entity_table"), vec![6, 8]);
        assert_eq!(shape("query.0.attn.q"), vec![2, 4, 8]);
        assert_eq!(shape("cross.0.attn.o"), vec![8, 8]);
        assert_eq!(shape("subgraph.0.ffn.w1"), vec![16, 8]);
        assert_eq!(shape("head"), vec![8, 16]);
        assert_eq!(p.names().len(), 6 + 3 * 12 + 1);
        assert!(p.is_finite());
        assert!(p.by_name("query.0.ln1.gain").unwrap().data().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn init_is_seeded() {
        let a = ModelParams::<f32>::init(&tiny(), 3).unwrap();
        let b = ModelParams::<f32>::init(&tiny(), 3).unwrap();
        let c = ModelParams::<f32>::init(&tiny(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn from_named_checks_shapes() {
        let p = ModelParams::<f64>::init(&tiny(), 0).unwrap();
        let named: Vec<_> = p.names().iter().cloned().zip(p.tensors().iter().cloned()).collect();
        assert_eq!(ModelParams::from_named(&tiny(), named.clone()).unwrap(), p);
        let mut broken = named;
        broken[0].1 = Tensor::zeros(&[5, 8]);
        assert!(ModelParams::from_named(&tiny(), broken).is_err());
    }

    #[test]
    fn benchmark_preset() {
        let cfg = ModelConfig::benchmark(14_505, 474);
        assert_eq!((cfg.layers, cfg.heads, cfg.hidden, cfg.ffn_dim), (3, 8, 320, 1280));
        assert_eq!(cfg.head_dim(), 40);
        cfg.validate().unwrap();
    }
}
