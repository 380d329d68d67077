use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal};

use crate::rng::Rng;
use crate::Real;

/// Shape of the encoder and its vocabularies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub d_ff: usize,
    pub max_pos: usize,
    /// Word vocabulary size, specials included.
    pub word_vocab: usize,
    /// Relation count, excluding the relation mask token.
    pub num_relations: usize,
    /// Entity count, excluding the entity mask token.
    pub num_entities: usize,
    pub init_std: f64,
    pub ln_eps: f64,
}

impl ModelConfig {
    /// Two layers, `d = 64`, four heads.
    pub fn small(word_vocab: usize, num_relations: usize, num_entities: usize) -> Self {
        Self {
            d_model: 64,
            num_heads: 4,
            num_layers: 2,
            d_ff: 256,
            max_pos: 160,
            word_vocab,
            num_relations,
            num_entities,
            init_std: 0.02,
            ln_eps: 1e-5,
        }
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.num_heads
    }

    pub fn relation_mask_id(&self) -> u32 {
        self.num_relations as u32
    }

    pub fn entity_mask_id(&self) -> u32 {
        self.num_entities as u32
    }

    /// Rows of the entity table, mask row included.
    pub fn entity_rows(&self) -> usize {
        self.num_entities + 1
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.d_model == 0 || self.num_heads == 0 || !self.d_model.is_multiple_of(self.num_heads) {
            return Err(format!("d_model {} not divisible by {} heads", self.d_model, self.num_heads));
        }
        if self.d_ff == 0 || self.max_pos == 0 || self.num_relations == 0 {
            return Err("d_ff, max_pos and num_relations must be positive".into());
        }
        if !(self.init_std > 0.0 && self.ln_eps > 0.0) {
            return Err("init_std and ln_eps must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub wq: Array2<T>,
    pub bq: Array1<T>,
    pub wk: Array2<T>,
    pub bk: Array1<T>,
    pub wv: Array2<T>,
    pub bv: Array1<T>,
    pub wo: Array2<T>,
    pub bo: Array1<T>,
    pub ln1_g: Array1<T>,
    pub ln1_b: Array1<T>,
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
    pub ln2_g: Array1<T>,
    pub ln2_b: Array1<T>,
}

/// Every dense parameter. Entity embeddings live in
/// [`EmbeddingStore`](crate::param_store::EmbeddingStore) instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub word_emb: Array2<T>,
    /// `num_relations + 1` rows; the last is the mask token.
    pub rel_emb: Array2<T>,
    pub type_emb: Array2<T>,
    pub pos_emb: Array2<T>,
    pub layers: Vec<LayerParams<T>>,
    pub word_head_w: Array2<T>,
    pub word_head_b: Array1<T>,
    pub rel_head_w: Array2<T>,
    pub rel_head_b: Array1<T>,
    pub ent_proj_w: Array2<T>,
    pub ent_proj_b: Array1<T>,
}

/// Borrowed view of one named tensor.
pub struct TensorRef<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

pub struct TensorMut<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [T],
}

macro_rules! layer_tensors {
    ($layer:expr, $prefix:expr, $out:ident, $as:ident, $wrap:ident) => {{
        let l = $layer;
        $out.push($wrap::new(format!("{}.wq", $prefix), l.wq.shape().to_vec(), l.wq.$as().unwrap()));
        $out.push($wrap::new(format!("{}.bq", $prefix), l.bq.shape().to_vec(), l.bq.$as().unwrap()));
        $out.push($wrap::new(format!("{}.wk", $prefix), l.wk.shape().to_vec(), l.wk.$as().unwrap()));
        $out.push($wrap::new(format!("{}.bk", $prefix), l.bk.shape().to_vec(), l.bk.$as().unwrap()));
        $out.push($wrap::new(format!("{}.wv", $prefix), l.wv.shape().to_vec(), l.wv.$as().unwrap()));
        $out.push($wrap::new(format!("{}.bv", $prefix), l.bv.shape().to_vec(), l.bv.$as().unwrap()));
        $out.push($wrap::new(format!("{}.wo", $prefix), l.wo.shape().to_vec(), l.wo.$as().unwrap()));
        $out.push($wrap::new(format!("{}.bo", $prefix), l.bo.shape().to_vec(), l.bo.$as().unwrap()));
        $out.push($wrap::new(format!("{}.ln1_g", $prefix), l.ln1_g.shape().to_vec(), l.ln1_g.$as().unwrap()));
        $out.push($wrap::new(format!("{}.ln1_b", $prefix), l.ln1_b.shape().to_vec(), l.ln1_b.$as().unwrap()));
        $out.push($wrap::new(format!("{}.w1", $prefix), l.w1.shape().to_vec(), l.w1.$as().unwrap()));
        $out.push($wrap::new(format!("{}.b1", $prefix), l.b1.shape().to_vec(), l.b1.$as().unwrap()));
        $out.push($wrap::new(format!("{}.w2", $prefix), l.w2.shape().to_vec(), l.w2.$as().unwrap()));
        $out.push($wrap::new(format!("{}.b2", $prefix), l.b2.shape().to_vec(), l.b2.$as().unwrap()));
        $out.push($wrap::new(format!("{}.ln2_g", $prefix), l.ln2_g.shape().to_vec(), l.ln2_g.$as().unwrap()));
        $out.push($wrap::new(format!("{}.ln2_b", $prefix), l.ln2_b.shape().to_vec(), l.ln2_b.$as().unwrap()));
    }};
}

impl<'a, T> TensorRef<'a, T> {
    fn new(name: String, shape: Vec<usize>, data: &'a [T]) -> Self {
        Self { name, shape, data }
    }
}

impl<'a, T> TensorMut<'a, T> {
    fn new(name: String, shape: Vec<usize>, data: &'a mut [T]) -> Self {
        Self { name, shape, data }
    }
}

fn normal<T: Real>(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Array2<T> {
    let dist = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || T::of(dist.sample(rng)))
}

impl<T: Real> LayerParams<T> {
    fn init(cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let (d, f, s) = (cfg.d_model, cfg.d_ff, cfg.init_std);
        Self {
            wq: normal(d, d, s, rng),
            bq: Array1::zeros(d),
            wk: normal(d, d, s, rng),
            bk: Array1::zeros(d),
            wv: normal(d, d, s, rng),
            bv: Array1::zeros(d),
            wo: normal(d, d, s, rng),
            bo: Array1::zeros(d),
            ln1_g: Array1::ones(d),
            ln1_b: Array1::zeros(d),
            w1: normal(d, f, s, rng),
            b1: Array1::zeros(f),
            w2: normal(f, d, s, rng),
            b2: Array1::zeros(d),
            ln2_g: Array1::ones(d),
            ln2_b: Array1::zeros(d),
        }
    }

    fn zeros(cfg: &ModelConfig) -> Self {
        let (d, f) = (cfg.d_model, cfg.d_ff);
        Self {
            wq: Array2::zeros((d, d)),
            bq: Array1::zeros(d),
            wk: Array2::zeros((d, d)),
            bk: Array1::zeros(d),
            wv: Array2::zeros((d, d)),
            bv: Array1::zeros(d),
            wo: Array2::zeros((d, d)),
            bo: Array1::zeros(d),
            ln1_g: Array1::zeros(d),
            ln1_b: Array1::zeros(d),
            w1: Array2::zeros((d, f)),
            b1: Array1::zeros(f),
            w2: Array2::zeros((f, d)),
            b2: Array1::zeros(d),
            ln2_g: Array1::zeros(d),
            ln2_b: Array1::zeros(d),
        }
    }
}

impl<T: Real> ModelParams<T> {
    /// Weights and embeddings ~ Normal(0, init_std²); biases zero; layer-norm
    /// gains one.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Self {
        let (d, s) = (config.d_model, config.init_std);
        Self {
            config,
            word_emb: normal(config.word_vocab, d, s, rng),
            rel_emb: normal(config.num_relations + 1, d, s, rng),
            type_emb: normal(3, d, s, rng),
            pos_emb: normal(config.max_pos, d, s, rng),
            layers: (0..config.num_layers).map(|_| LayerParams::init(&config, rng)).collect(),
            word_head_w: normal(d, config.word_vocab, s, rng),
            word_head_b: Array1::zeros(config.word_vocab),
            rel_head_w: normal(d, config.num_relations, s, rng),
            rel_head_b: Array1::zeros(config.num_relations),
            ent_proj_w: normal(d, d, s, rng),
            ent_proj_b: Array1::zeros(d),
        }
    }

    pub fn zeros(config: ModelConfig) -> Self {
        let d = config.d_model;
        Self {
            config,
            word_emb: Array2::zeros((config.word_vocab, d)),
            rel_emb: Array2::zeros((config.num_relations + 1, d)),
            type_emb: Array2::zeros((3, d)),
            pos_emb: Array2::zeros((config.max_pos, d)),
            layers: (0..config.num_layers).map(|_| LayerParams::zeros(&config)).collect(),
            word_head_w: Array2::zeros((d, config.word_vocab)),
            word_head_b: Array1::zeros(config.word_vocab),
            rel_head_w: Array2::zeros((d, config.num_relations)),
            rel_head_b: Array1::zeros(config.num_relations),
            ent_proj_w: Array2::zeros((d, d)),
            ent_proj_b: Array1::zeros(d),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    /// All tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<TensorRef<'_, T>> {
        let mut out = Vec::new();
        out.push(TensorRef::new("word_emb".into(), self.word_emb.shape().to_vec(), self.word_emb.as_slice().unwrap()));
        out.push(TensorRef::new("rel_emb".into(), self.rel_emb.shape().to_vec(), self.rel_emb.as_slice().unwrap()));
        out.push(TensorRef::new("type_emb".into(), self.type_emb.shape().to_vec(), self.type_emb.as_slice().unwrap()));
        out.push(TensorRef::new("pos_emb".into(), self.pos_emb.shape().to_vec(), self.pos_emb.as_slice().unwrap()));
        for (i, l) in self.layers.iter().enumerate() {
            layer_tensors!(l, format!("layer{i}"), out, as_slice, TensorRef);
        }
        out.push(TensorRef::new("word_head_w".into(), self.word_head_w.shape().to_vec(), self.word_head_w.as_slice().unwrap()));
        out.push(TensorRef::new("word_head_b".into(), self.word_head_b.shape().to_vec(), self.word_head_b.as_slice().unwrap()));
        out.push(TensorRef::new("rel_head_w".into(), self.rel_head_w.shape().to_vec(), self.rel_head_w.as_slice().unwrap()));
        out.push(TensorRef::new("rel_head_b".into(), self.rel_head_b.shape().to_vec(), self.rel_head_b.as_slice().unwrap()));
        out.push(TensorRef::new("ent_proj_w".into(), self.ent_proj_w.shape().to_vec(), self.ent_proj_w.as_slice().unwrap()));
        out.push(TensorRef::new("ent_proj_b".into(), self.ent_proj_b.shape().to_vec(), self.ent_proj_b.as_slice().unwrap()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        let mut out = Vec::new();
        out.push(TensorMut::new("word_emb".into(), self.word_emb.shape().to_vec(), self.word_emb.as_slice_mut().unwrap()));
        out.push(TensorMut::new("rel_emb".into(), self.rel_emb.shape().to_vec(), self.rel_emb.as_slice_mut().unwrap()));
        out.push(TensorMut::new("type_emb".into(), self.type_emb.shape().to_vec(), self.type_emb.as_slice_mut().unwrap()));
        out.push(TensorMut::new("pos_emb".into(), self.pos_emb.shape().to_vec(), self.pos_emb.as_slice_mut().unwrap()));
        for (i, l) in self.layers.iter_mut().enumerate() {
            layer_tensors!(l, format!("layer{i}"), out, as_slice_mut, TensorMut);
        }
        out.push(TensorMut::new("word_head_w".into(), self.word_head_w.shape().to_vec(), self.word_head_w.as_slice_mut().unwrap()));
        out.push(TensorMut::new("word_head_b".into(), self.word_head_b.shape().to_vec(), self.word_head_b.as_slice_mut().unwrap()));
        out.push(TensorMut::new("rel_head_w".into(), self.rel_head_w.shape().to_vec(), self.rel_head_w.as_slice_mut().unwrap()));
        out.push(TensorMut::new("rel_head_b".into(), self.rel_head_b.shape().to_vec(), self.rel_head_b.as_slice_mut().unwrap()));
        out.push(TensorMut::new("ent_proj_w".into(), self.ent_proj_w.shape().to_vec(), self.ent_proj_w.as_slice_mut().unwrap()));
        out.push(TensorMut::new("ent_proj_b".into(), self.ent_proj_b.shape().to_vec(), self.ent_proj_b.as_slice_mut().unwrap()));
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn sum_squares(&self) -> T {
        self.tensors().iter().flat_map(|t| t.data.iter()).map(|&x| x * x).sum()
    }

    pub fn scale(&mut self, k: T) {
        for t in self.tensors_mut() {
            for x in t.data {
                *x *= k;
            }
        }
    }

    /// Same shapes as `other`.
    pub fn same_shape(&self, other: &Self) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.shape == y.shape)
    }
}
