use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use super::{EncoderError, EntityRows, LayerParams, ModelParams};
use crate::graph::{Batch, NodeKind, PaddedGraph};
use crate::Real;

/// One graph as seen by the encoder: `n = mask.nrows()` slots, of which the
/// first `real` are nodes and the rest padding.
#[derive(Debug, Clone, Copy)]
pub struct GraphInput<'a, T> {
    pub kinds: &'a [NodeKind],
    pub ids: &'a [u32],
    pub positions: &'a [u32],
    pub real: usize,
    pub mask: ArrayView2<'a, T>,
}

impl<'a, T: Real> GraphInput<'a, T> {
    /// Only the real nodes; padding is cut off.
    pub fn trimmed(g: &'a PaddedGraph<T>) -> Self {
        let n = g.len;
        Self {
            kinds: &g.kinds[..n],
            ids: &g.ids[..n],
            positions: &g.positions[..n],
            real: n,
            mask: g.mask.slice(s![..n, ..n]),
        }
    }

    /// Every slot, padding included.
    pub fn padded(g: &'a PaddedGraph<T>) -> Self {
        Self { kinds: &g.kinds, ids: &g.ids, positions: &g.positions, real: g.len, mask: g.mask.view() }
    }

    pub fn n(&self) -> usize {
        self.mask.nrows()
    }
}

pub(super) struct LnCache<T> {
    pub xhat: Array2<T>,
    pub inv_std: Array1<T>,
}

pub(super) struct LayerCache<T> {
    pub x: Array2<T>,
    pub q: Array2<T>,
    pub k: Array2<T>,
    pub v: Array2<T>,
    pub probs: Vec<Array2<T>>,
    pub ctx: Array2<T>,
    pub ln1: LnCache<T>,
    pub h1: Array2<T>,
    pub ff_pre: Array2<T>,
    pub ff_act: Array2<T>,
    pub ln2: LnCache<T>,
}

/// Per-graph forward record used by the backward pass.
pub(super) struct GraphTrace<T> {
    pub layers: Vec<LayerCache<T>>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    half * x * (T::one() + (T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x)).tanh())
}

pub(super) fn gelu_grad<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    let u = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    let t = u.tanh();
    let du = T::of(GELU_C) * (T::one() + T::of(3.0 * GELU_A) * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

/// Row-wise layer normalization with gain `g` and offset `b`.
pub fn layer_norm<T: Real>(x: &Array2<T>, g: &Array1<T>, b: &Array1<T>, eps: T) -> Array2<T> {
    layer_norm_cached(x, g, b, eps).0
}

fn layer_norm_cached<T: Real>(x: &Array2<T>, g: &Array1<T>, b: &Array1<T>, eps: T) -> (Array2<T>, LnCache<T>) {
    let (n, d) = x.dim();
    let dn = T::of(d as f64);
    let mut xhat = Array2::zeros((n, d));
    let mut inv_std = Array1::zeros(n);
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() / dn;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
        let inv = T::one() / (var + eps).sqrt();
        inv_std[i] = inv;
        Zip::from(xhat.row_mut(i)).and(row).for_each(|o, &v| *o = (v - mean) * inv);
    }
    let y = &xhat * g + b;
    (y, LnCache { xhat, inv_std })
}

fn softmax_rows<T: Real>(a: &mut Array2<T>) {
    for mut row in a.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
}

/// Token + type + position embedding of every slot. Padding slots are zero.
pub fn embed<T: Real>(
    input: &GraphInput<'_, T>,
    params: &ModelParams<T>,
    rows: &EntityRows<T>,
) -> Result<Array2<T>, EncoderError> {
    let cfg = &params.config;
    let n = input.n();
    if input.kinds.len() < n || input.ids.len() < n || input.positions.len() < n {
        return Err(EncoderError::ShapeMismatch(format!("graph metadata shorter than mask ({n})")));
    }
    let mut x = Array2::zeros((n, cfg.d_model));
    for i in 0..input.real {
        let (kind, id, pos) = (input.kinds[i], input.ids[i], input.positions[i]);
        let tok = match kind {
            NodeKind::Word => {
                if id as usize >= cfg.word_vocab {
                    return Err(EncoderError::IdOutOfRange { kind, id, size: cfg.word_vocab });
                }
                params.word_emb.row(id as usize)
            }
            NodeKind::Relation => {
                if id as usize > cfg.num_relations {
                    return Err(EncoderError::IdOutOfRange { kind, id, size: cfg.num_relations + 1 });
                }
                params.rel_emb.row(id as usize)
            }
            NodeKind::Entity => rows.row(id).ok_or(EncoderError::MissingEntityRow(id))?,
        };
        if pos as usize >= cfg.max_pos {
            return Err(EncoderError::PositionOutOfRange(pos));
        }
        let mut out = x.row_mut(i);
        out.assign(&tok);
        out += &params.type_emb.row(kind.index());
        out += &params.pos_emb.row(pos as usize);
    }
    Ok(x)
}

fn project<T: Real>(x: &Array2<T>, w: &Array2<T>, b: &Array1<T>) -> Array2<T> {
    x.dot(w) + b
}

fn attention_core<T: Real>(
    x: &Array2<T>,
    mask: &ArrayView2<'_, T>,
    layer: &LayerParams<T>,
    num_heads: usize,
) -> Result<(Array2<T>, Array2<T>, Array2<T>, Vec<Array2<T>>, Array2<T>), EncoderError> {
    let (n, d) = x.dim();
    if mask.dim() != (n, n) {
        return Err(EncoderError::ShapeMismatch(format!("mask {:?} for {n} nodes", mask.dim())));
    }
    if layer.wq.dim() != (d, d) || d % num_heads != 0 {
        return Err(EncoderError::ShapeMismatch(format!("layer width {:?} for d = {d}", layer.wq.dim())));
    }
    let dk = d / num_heads;
    let scale = T::one() / T::of(dk as f64).sqrt();
    let q = project(x, &layer.wq, &layer.bq);
    let k = project(x, &layer.wk, &layer.bk);
    let v = project(x, &layer.wv, &layer.bv);
    let mut ctx = Array2::zeros((n, d));
    let mut probs = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let mut a = q.slice(cols).dot(&k.slice(cols).t());
        a.mapv_inplace(|v| v * scale);
        a += mask;
        softmax_rows(&mut a);
        ctx.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
        probs.push(a);
    }
    Ok((q, k, v, probs, ctx))
}

/// Multi-head masked self-attention followed by the output projection.
pub fn masked_attention<T: Real>(
    x: &Array2<T>,
    mask: &ArrayView2<'_, T>,
    layer: &LayerParams<T>,
    num_heads: usize,
) -> Result<Array2<T>, EncoderError> {
    let (_, _, _, _, ctx) = attention_core(x, mask, layer, num_heads)?;
    Ok(project(&ctx, &layer.wo, &layer.bo))
}

/// Per-head attention weight matrices, `softmax(QKᵀ/√d_k + M)`.
pub fn attention_weights<T: Real>(
    x: &Array2<T>,
    mask: &ArrayView2<'_, T>,
    layer: &LayerParams<T>,
    num_heads: usize,
) -> Result<Vec<Array2<T>>, EncoderError> {
    Ok(attention_core(x, mask, layer, num_heads)?.3)
}

fn layer_forward<T: Real>(
    x: Array2<T>,
    mask: &ArrayView2<'_, T>,
    layer: &LayerParams<T>,
    params: &ModelParams<T>,
) -> Result<(Array2<T>, LayerCache<T>), EncoderError> {
    let eps = T::of(params.config.ln_eps);
    let (q, k, v, probs, ctx) = attention_core(&x, mask, layer, params.config.num_heads)?;
    let attn = project(&ctx, &layer.wo, &layer.bo);
    let (h1, ln1) = layer_norm_cached(&(&x + &attn), &layer.ln1_g, &layer.ln1_b, eps);
    let ff_pre = project(&h1, &layer.w1, &layer.b1);
    let ff_act = ff_pre.mapv(gelu);
    let ff_out = project(&ff_act, &layer.w2, &layer.b2);
    let (out, ln2) = layer_norm_cached(&(&h1 + &ff_out), &layer.ln2_g, &layer.ln2_b, eps);
    Ok((out, LayerCache { x, q, k, v, probs, ctx, ln1, h1, ff_pre, ff_act, ln2 }))
}

pub(super) fn forward_traced<T: Real>(
    input: &GraphInput<'_, T>,
    params: &ModelParams<T>,
    rows: &EntityRows<T>,
) -> Result<(Array2<T>, GraphTrace<T>), EncoderError> {
    let mut x = embed(input, params, rows)?;
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (out, cache) = layer_forward(x, &input.mask, layer, params)?;
        layers.push(cache);
        x = out;
    }
    Ok((x, GraphTrace { layers }))
}

/// Final node states of one graph.
pub fn forward_graph<T: Real>(
    input: &GraphInput<'_, T>,
    params: &ModelParams<T>,
    rows: &EntityRows<T>,
) -> Result<Array2<T>, EncoderError> {
    Ok(forward_traced(input, params, rows)?.0)
}

/// Final node states for every graph in the batch, padding cut off. Padded
/// columns carry an additive `NEG_INF` whose exponential is exactly zero, so
/// this equals running on the padded layout and discarding padded rows.
pub fn forward<T: Real>(
    batch: &Batch<T>,
    params: &ModelParams<T>,
    rows: &EntityRows<T>,
) -> Result<Vec<Array2<T>>, EncoderError> {
    batch
        .graphs
        .iter()
        .map(|g| forward_graph(&GraphInput::trimmed(g), params, rows))
        .collect()
}

/// Runs on all `pad_to` slots; padded rows of the result are zeroed.
pub fn forward_padded<T: Real>(
    g: &PaddedGraph<T>,
    params: &ModelParams<T>,
    rows: &EntityRows<T>,
) -> Result<Array2<T>, EncoderError> {
    let mut h = forward_graph(&GraphInput::padded(g), params, rows)?;
    h.slice_mut(s![g.len.., ..]).fill(T::zero());
    Ok(h)
}

pub(super) fn sum_rows<T: Real>(a: &Array2<T>) -> Array1<T> {
    a.sum_axis(Axis(0))
}
