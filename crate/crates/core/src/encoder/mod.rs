//! Masked Transformer encoder over WK graphs.
//!
//! Node inputs are the sum of a token embedding (from the word, relation or
//! entity table depending on node kind), a type embedding and a soft-position
//! embedding. Each layer runs multi-head self-attention with the graph's
//! additive mask, so a node only reads from its 1-hop neighbours, followed by
//! a GELU feed-forward block; both sublayers are post-norm residual.
//!
//! Gradients are computed by hand in [`backward`]. Every tensor has a
//! finite-difference check in the test suite.

mod backward;
pub mod checkpoint;
mod forward;
mod params;

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1};

pub use backward::{compute_gradients, Gradients, LossEval};
pub use forward::{
    attention_weights, embed, forward, forward_graph, forward_padded, gelu, layer_norm, masked_attention, GraphInput,
};
pub use params::{LayerParams, ModelConfig, ModelParams, TensorMut, TensorRef};

use crate::graph::NodeKind;
use crate::Real;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EncoderError {
    #[error("{kind:?} id {id} out of range (table has {size} rows)")]
    IdOutOfRange { kind: NodeKind, id: u32, size: usize },
    #[error("position {0} exceeds the position table")]
    PositionOutOfRange(u32),
    #[error("entity {0} was not supplied by the parameter store")]
    MissingEntityRow(u32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss is not finite")]
    NonFiniteLoss,
}

/// Entity embeddings fetched for one batch, addressed by entity id.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityRows<T> {
    ids: Vec<u32>,
    index: HashMap<u32, usize>,
    rows: Array2<T>,
}

impl<T: Real> EntityRows<T> {
    /// `ids` must be distinct; row `i` of `rows` belongs to `ids[i]`.
    pub fn new(ids: Vec<u32>, rows: Array2<T>) -> Self {
        assert_eq!(ids.len(), rows.nrows());
        let index: HashMap<u32, usize> = ids.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        assert_eq!(index.len(), ids.len(), "duplicate entity ids");
        Self { ids, index, rows }
    }

    pub fn empty(d: usize) -> Self {
        Self::new(Vec::new(), Array2::zeros((0, d)))
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn slot(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn row(&self, id: u32) -> Option<ArrayView1<'_, T>> {
        self.slot(id).map(|i| self.rows.row(i))
    }

    pub fn rows(&self) -> &Array2<T> {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut Array2<T> {
        &mut self.rows
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn zeros_like(&self) -> Array2<T> {
        Array2::zeros(self.rows.raw_dim())
    }
}
