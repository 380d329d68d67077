//! Reverse-mode gradients of the encoder, written out by hand.

use ndarray::{s, Array1, Array2, Axis, Zip};

use super::forward::{forward_traced, gelu_grad, sum_rows, GraphInput, GraphTrace, LnCache};
use super::{EncoderError, EntityRows, LayerParams, ModelParams};
use crate::graph::{Batch, NodeKind};
use crate::Real;

/// What a loss function hands back to [`compute_gradients`]: the scalar, its
/// gradient with respect to each graph's final node states, any gradient it
/// produced directly for parameters (the prediction heads) and for entity
/// rows, plus arbitrary extra output.
pub struct LossEval<T, X> {
    pub loss: T,
    pub d_hidden: Vec<Array2<T>>,
    pub param_grads: ModelParams<T>,
    pub entity_grads: Array2<T>,
    pub extra: X,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub params: ModelParams<T>,
    /// One row per entry of the batch's [`EntityRows`].
    pub entity: Array2<T>,
}

impl<T: Real> Gradients<T> {
    pub fn norm(&self) -> T {
        (self.params.sum_squares() + self.entity.iter().map(|&x| x * x).sum::<T>()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.params.is_finite() && self.entity.iter().all(|x| x.is_finite())
    }

    pub fn scale(&mut self, k: T) {
        self.params.scale(k);
        self.entity.mapv_inplace(|x| x * k);
    }
}

fn ln_backward<T: Real>(
    dy: &Array2<T>,
    cache: &LnCache<T>,
    g: &Array1<T>,
    dg: &mut Array1<T>,
    db: &mut Array1<T>,
) -> Array2<T> {
    let d = T::of(dy.ncols() as f64);
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let dxhat = dy * g;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let dh = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let sum_dh = dh.sum();
        let sum_dh_xh = dh.dot(&xh);
        let inv = cache.inv_std[i];
        Zip::from(dx.row_mut(i))
            .and(dh)
            .and(xh)
            .for_each(|o, &a, &b| *o = inv / d * (d * a - sum_dh - b * sum_dh_xh));
    }
    dx
}

fn linear_backward<T: Real>(
    x: &Array2<T>,
    w: &Array2<T>,
    dy: &Array2<T>,
    dw: &mut Array2<T>,
    db: &mut Array1<T>,
) -> Array2<T> {
    *dw += &x.t().dot(dy);
    *db += &sum_rows(dy);
    dy.dot(&w.t())
}

fn layer_backward<T: Real>(
    d_out: Array2<T>,
    c: &super::forward::LayerCache<T>,
    layer: &LayerParams<T>,
    grad: &mut LayerParams<T>,
    num_heads: usize,
) -> Array2<T> {
    // out = LN2(h1 + ff_out)
    let dz2 = ln_backward(&d_out, &c.ln2, &layer.ln2_g, &mut grad.ln2_g, &mut grad.ln2_b);
    let d_act = linear_backward(&c.ff_act, &layer.w2, &dz2, &mut grad.w2, &mut grad.b2);
    let mut d_pre = d_act;
    Zip::from(&mut d_pre).and(&c.ff_pre).for_each(|g, &x| *g *= gelu_grad(x));
    let mut dh1 = linear_backward(&c.h1, &layer.w1, &d_pre, &mut grad.w1, &mut grad.b1);
    dh1 += &dz2;

    // h1 = LN1(x + attn)
    let dz1 = ln_backward(&dh1, &c.ln1, &layer.ln1_g, &mut grad.ln1_g, &mut grad.ln1_b);
    let dctx = linear_backward(&c.ctx, &layer.wo, &dz1, &mut grad.wo, &mut grad.bo);

    let (n, d) = c.x.dim();
    let dk = d / num_heads;
    let scale = T::one() / T::of(dk as f64).sqrt();
    let mut dq = Array2::zeros((n, d));
    let mut dkm = Array2::zeros((n, d));
    let mut dv = Array2::zeros((n, d));
    for h in 0..num_heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let p = &c.probs[h];
        let dctx_h = dctx.slice(cols);
        let dp = dctx_h.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&dctx_h));
        // softmax backward, row-wise: dS = P ⊙ (dP - <dP, P>)
        let mut ds = &dp * p;
        let row_dot = ds.sum_axis(Axis(1));
        Zip::from(ds.rows_mut())
            .and(p.rows())
            .and(&row_dot)
            .for_each(|mut ds_row, p_row, &rd| {
                Zip::from(&mut ds_row).and(&p_row).for_each(|o, &pv| *o -= pv * rd);
            });
        ds.mapv_inplace(|v| v * scale);
        dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
        dkm.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
    }
    let mut dx = dz1;
    dx += &linear_backward(&c.x, &layer.wq, &dq, &mut grad.wq, &mut grad.bq);
    dx += &linear_backward(&c.x, &layer.wk, &dkm, &mut grad.wk, &mut grad.bk);
    dx += &linear_backward(&c.x, &layer.wv, &dv, &mut grad.wv, &mut grad.bv);
    dx
}

fn graph_backward<T: Real>(
    input: &GraphInput<'_, T>,
    trace: &GraphTrace<T>,
    params: &ModelParams<T>,
    rows: &EntityRows<T>,
    d_hidden: Array2<T>,
    grads: &mut ModelParams<T>,
    entity_grads: &mut Array2<T>,
) {
    let mut d = d_hidden;
    for ((layer, cache), grad) in params
        .layers
        .iter()
        .zip(&trace.layers)
        .zip(grads.layers.iter_mut())
        .rev()
    {
        d = layer_backward(d, cache, layer, grad, params.config.num_heads);
    }
    for i in 0..input.real {
        let row = d.row(i);
        let id = input.ids[i] as usize;
        match input.kinds[i] {
            NodeKind::Word => grads.word_emb.row_mut(id).scaled_add(T::one(), &row),
            NodeKind::Relation => grads.rel_emb.row_mut(id).scaled_add(T::one(), &row),
            NodeKind::Entity => {
                let slot = rows.slot(input.ids[i]).expect("embed checked entity rows");
                entity_grads.row_mut(slot).scaled_add(T::one(), &row);
            }
        }
        grads.type_emb.row_mut(input.kinds[i].index()).scaled_add(T::one(), &row);
        grads.pos_emb.row_mut(input.positions[i] as usize).scaled_add(T::one(), &row);
    }
}

/// Forward pass, loss, and exact gradients for every dense parameter and
/// every supplied entity row.
///
/// `loss_fn` receives the final node states of each graph (padding removed)
/// and must return a [`LossEval`] whose `param_grads` and `entity_grads`
/// already contain whatever the loss contributes directly.
pub fn compute_gradients<T, X, E, F>(
    batch: &Batch<T>,
    params: &ModelParams<T>,
    rows: &EntityRows<T>,
    loss_fn: F,
) -> Result<(T, X, Gradients<T>), E>
where
    T: Real,
    E: From<EncoderError>,
    F: FnOnce(&[Array2<T>]) -> Result<LossEval<T, X>, E>,
{
    let inputs: Vec<GraphInput<'_, T>> = batch.graphs.iter().map(GraphInput::trimmed).collect();
    let mut hidden = Vec::with_capacity(inputs.len());
    let mut traces = Vec::with_capacity(inputs.len());
    for input in &inputs {
        let (h, trace) = forward_traced(input, params, rows)?;
        hidden.push(h);
        traces.push(trace);
    }
    let eval = loss_fn(&hidden)?;
    if !eval.loss.is_finite() {
        return Err(EncoderError::NonFiniteLoss.into());
    }
    if eval.d_hidden.len() != hidden.len()
        || eval.d_hidden.iter().zip(&hidden).any(|(a, b)| a.dim() != b.dim())
        || eval.entity_grads.dim() != rows.rows().dim()
        || !eval.param_grads.same_shape(params)
    {
        return Err(EncoderError::ShapeMismatch("loss gradients do not match the batch".into()).into());
    }
    let mut grads = eval.param_grads;
    let mut entity = eval.entity_grads;
    for ((input, trace), dh) in inputs.iter().zip(&traces).zip(eval.d_hidden) {
        graph_backward(input, trace, params, rows, dh, &mut grads, &mut entity);
    }
    Ok((eval.loss, eval.extra, Gradients { params: grads, entity }))
}
