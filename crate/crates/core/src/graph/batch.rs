use ndarray::Array2;

use crate::graph::build::BuildError;
use crate::graph::text::PAD;
use crate::graph::{NodeKind, WkGraph};
use crate::Real;

/// Additive bias for disconnected pairs. Finite so that `A + M` never
/// produces NaN, and large enough that its exponential is exactly zero in
/// both `f32` and `f64`.
pub const NEG_INF: f64 = -1.0e9;

/// One graph laid out in `pad_to` slots.
#[derive(Debug, Clone)]
pub struct PaddedGraph<T> {
    /// Number of real nodes; slots `len..pad_to` are padding.
    pub len: usize,
    pub kinds: Vec<NodeKind>,
    pub ids: Vec<u32>,
    pub positions: Vec<u32>,
    pub anchors: Vec<bool>,
    /// `0` where connected, [`NEG_INF`] where disconnected or padded.
    pub mask: Array2<T>,
}

impl<T: Real> PaddedGraph<T> {
    pub fn is_pad(&self, i: usize) -> bool {
        i >= self.len
    }
}

#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub pad_to: usize,
    pub graphs: Vec<PaddedGraph<T>>,
}

impl<T> Batch<T> {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// Pads every graph to `pad_to` slots. Padded slots are PAD words at
/// position 0.
pub fn to_batch<T: Real>(graphs: &[WkGraph], pad_to: usize) -> Result<Batch<T>, BuildError> {
    let neg = T::of(NEG_INF);
    let mut out = Vec::with_capacity(graphs.len());
    for (index, g) in graphs.iter().enumerate() {
        let n = g.len();
        if n > pad_to {
            return Err(BuildError::GraphTooLarge { index, len: n, pad_to });
        }
        let mut kinds = vec![NodeKind::Word; pad_to];
        let mut ids = vec![PAD; pad_to];
        let mut positions = vec![0; pad_to];
        let mut anchors = vec![false; pad_to];
        for (i, node) in g.nodes().iter().enumerate() {
            kinds[i] = node.kind;
            ids[i] = node.token_id;
            positions[i] = node.position;
            anchors[i] = node.anchor;
        }
        let mask = Array2::from_shape_fn((pad_to, pad_to), |(i, j)| {
            if i < n && j < n && g.connected(i, j) {
                T::zero()
            } else {
                neg
            }
        });
        out.push(PaddedGraph { len: n, kinds, ids, positions, anchors, mask });
    }
    Ok(Batch { pad_to, graphs: out })
}
