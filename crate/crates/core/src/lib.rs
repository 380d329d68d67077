//! Word-knowledge graph language modelling.
//!
//! A sentence and a knowledge graph are fused into a single heterogeneous
//! graph: words stay fully connected, linked mentions become *anchor* entity
//! nodes, and each anchor carries a sampled star of `(relation, tail)`
//! triplets. A Transformer encoder whose attention is masked by that graph's
//! adjacency is pretrained with masked-node prediction over words, entities
//! and relations, and evaluated by relation completion and cloze probing.
//!
//! Module map:
//!
//! - [`kg`]: triplet store, alias table, 3/4-power negative distribution.
//! - [`corpus`]: linked sentences bundled with their vocabularies.
//! - [`graph`]: tokenizer, mention linker, graph builder, batching, codec.
//! - [`encoder`]: parameters, masked attention forward pass, exact backprop.
//! - [`objective`]: mask plans, anchor-neighbour dropout, negatives, loss.
//! - [`param_store`]: concurrently updated entity embedding table.
//! - [`optim`]: dense AdamW used for everything outside the entity table.
//! - [`trainer`]: the pretraining loop and its file formats.
//! - [`eval`]: relation completion, ranking metrics, cloze P@1.
//! - [`synthetic`]: a small generated KG plus templated corpus.

pub mod corpus;
pub mod encoder;
pub mod eval;
pub mod graph;
pub mod kg;
pub mod objective;
pub mod optim;
pub mod param_store;
mod real;
pub mod rng;
pub mod synthetic;
pub mod trainer;

pub use real::Real;
