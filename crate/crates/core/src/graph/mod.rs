//! Word-knowledge graphs.
//!
//! A [`WkGraph`] holds three kinds of node. Word nodes come from the
//! sentence, entity nodes are either *anchors* (a linked mention collapsed
//! into one node) or tails of knowledge triplets, and relation nodes sit
//! between an anchor and a tail. The word/anchor block is a clique; each
//! relation node touches exactly its head anchor and its tail.
//!
//! Positions are "soft": an anchor at position `p` puts its relation nodes at
//! `p + 1` and their freshly added tails at `p + 2`, so many nodes can share
//! an index.

mod batch;
mod build;
pub mod codec;
pub mod link;
pub mod text;

pub use batch::{to_batch, Batch, PaddedGraph, NEG_INF};
pub use build::{build_graph, word_graph, BuildError, BuilderConfig};
pub use link::{link_mentions, Link};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum NodeKind {
    Word = 0,
    Entity = 1,
    Relation = 2,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Word, NodeKind::Entity, NodeKind::Relation];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Word),
            1 => Some(Self::Entity),
            2 => Some(Self::Relation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node {
    pub kind: NodeKind,
    /// Id in the vocabulary of `kind`.
    pub token_id: u32,
    pub position: u32,
    pub anchor: bool,
}

impl Node {
    pub fn word(token_id: u32, position: u32) -> Self {
        Self { kind: NodeKind::Word, token_id, position, anchor: false }
    }

    pub fn entity(token_id: u32, position: u32, anchor: bool) -> Self {
        Self { kind: NodeKind::Entity, token_id, position, anchor }
    }

    pub fn relation(token_id: u32, position: u32) -> Self {
        Self { kind: NodeKind::Relation, token_id, position, anchor: false }
    }
}

/// Undirected heterogeneous graph with self-loops on every node.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WkGraph {
    nodes: Vec<Node>,
    adj: Vec<Vec<bool>>,
}

impl WkGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a graph from parts, e.g. after decoding. `adj` must be
    /// square with the node count.
    pub fn from_parts(nodes: Vec<Node>, adj: Vec<Vec<bool>>) -> Self {
        assert_eq!(nodes.len(), adj.len());
        assert!(adj.iter().all(|row| row.len() == nodes.len()));
        Self { nodes, adj }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut Node {
        &mut self.nodes[i]
    }

    /// Appends a node connected only to itself; returns its index.
    pub fn add_node(&mut self, node: Node) -> usize {
        let n = self.nodes.len();
        for row in &mut self.adj {
            row.push(false);
        }
        let mut row = vec![false; n + 1];
        row[n] = true;
        self.adj.push(row);
        self.nodes.push(node);
        n
    }

    pub fn connect(&mut self, i: usize, j: usize) {
        self.adj[i][j] = true;
        self.adj[j][i] = true;
    }

    pub fn connected(&self, i: usize, j: usize) -> bool {
        self.adj[i][j]
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adj
    }

    /// Neighbours of `i`, excluding `i` itself.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[i].iter().enumerate().filter(move |&(j, &c)| c && j != i).map(|(j, _)| j)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].iter().filter(|&&c| c).count()
    }

    pub fn anchors(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| n.anchor).map(|(i, _)| i)
    }

    /// Graphs without anchors carry no knowledge and are dropped from training.
    pub fn is_anchor_free(&self) -> bool {
        !self.nodes.iter().any(|n| n.anchor)
    }

    pub fn find_entity(&self, entity: u32) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.kind == NodeKind::Entity && n.token_id == entity)
    }

    /// Relation nodes hanging off anchor `a`: adjacent to it and one position
    /// to its right.
    pub fn owned_relations(&self, a: usize) -> Vec<usize> {
        let p = self.nodes[a].position + 1;
        self.neighbors(a)
            .filter(|&j| self.nodes[j].kind == NodeKind::Relation && self.nodes[j].position == p)
            .collect()
    }

    /// Adds a relation node for `anchor` and connects it to `tail`. An
    /// existing node for `tail` is reused; otherwise a new non-anchor entity
    /// node is placed two positions after the anchor. Returns the relation
    /// and tail indices.
    pub fn attach_triplet(&mut self, anchor: usize, relation: u32, tail: u32) -> (usize, usize) {
        let p = self.nodes[anchor].position;
        let r = self.add_node(Node::relation(relation, p + 1));
        self.connect(anchor, r);
        let t = match self.find_entity(tail) {
            Some(t) => t,
            None => self.add_node(Node::entity(tail, p + 2, false)),
        };
        self.connect(r, t);
        (r, t)
    }

    /// Keeps nodes with `keep[i]`, preserving order. Returns the new graph
    /// and, per old index, its new index if kept.
    pub fn retain(&self, keep: &[bool]) -> (WkGraph, Vec<Option<usize>>) {
        let mut remap = vec![None; self.len()];
        let mut next = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = Some(next);
                next += 1;
            }
        }
        let kept: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        let nodes = kept.iter().map(|&i| self.nodes[i]).collect();
        let adj = kept
            .iter()
            .map(|&i| kept.iter().map(|&j| self.adj[i][j]).collect())
            .collect();
        (WkGraph { nodes, adj }, remap)
    }

    /// Checks the structural invariants every built graph satisfies.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.len();
        for i in 0..n {
            if !self.adj[i][i] {
                return Err(format!("node {i} lacks a self-loop"));
            }
            for j in 0..n {
                if self.adj[i][j] != self.adj[j][i] {
                    return Err(format!("asymmetric edge {i}-{j}"));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (i, node) in self.nodes.iter().enumerate() {
            match node.kind {
                NodeKind::Entity => {
                    if !seen.insert(node.token_id) {
                        return Err(format!("entity {} repeated at node {i}", node.token_id));
                    }
                }
                NodeKind::Relation => {
                    if self.degree(i) != 3 {
                        return Err(format!("relation node {i} has degree {}", self.degree(i)));
                    }
                    if self.neighbors(i).any(|j| self.nodes[j].kind != NodeKind::Entity) {
                        return Err(format!("relation node {i} touches a non-entity"));
                    }
                }
                NodeKind::Word => {
                    if self
                        .neighbors(i)
                        .any(|j| self.nodes[j].kind == NodeKind::Entity && !self.nodes[j].anchor)
                    {
                        return Err(format!("word node {i} touches a tail entity"));
                    }
                }
            }
        }
        let text: Vec<usize> = (0..n)
            .filter(|&i| self.nodes[i].kind == NodeKind::Word || self.nodes[i].anchor)
            .collect();
        for &i in &text {
            for &j in &text {
                if !self.adj[i][j] {
                    return Err(format!("text nodes {i} and {j} not connected"));
                }
            }
        }
        Ok(())
    }
}
