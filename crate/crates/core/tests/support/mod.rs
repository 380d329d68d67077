//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use wklm::corpus::Corpus;
use wklm::encoder::{EntityRows, ModelConfig};
use wklm::eval::{
    majority_ranks, make_completion_splits, metrics, CompletionSplits, EvalConfig, Evaluator, RankingResult,
    SplitConfig,
};
use wklm::graph::text::{CLS, NUM_SPECIAL};
use wklm::graph::{Node, NodeKind, WkGraph};
use wklm::rng::{self, Rng, Stream};
use wklm::synthetic::{generate, SyntheticConfig};
use wklm::trainer::{run, RunOutput, TrainConfig, TrainState};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// A random graph together with the adjacency it was generated from, kept
/// separately so tests can compare against it.
pub struct RandomGraph {
    pub graph: WkGraph,
    pub adj: Vec<Vec<bool>>,
}

/// `n` nodes: CLS first, then random kinds with ids distinct within each
/// kind, random positions, and each pair connected with probability `p`.
pub fn random_graph(rng: &mut Rng, n: usize, cfg: &ModelConfig, p: f64) -> RandomGraph {
    let words = sample(rng, cfg.word_vocab - NUM_SPECIAL as usize, n).into_vec();
    let ents = sample(rng, cfg.num_entities, n).into_vec();
    let rels = sample(rng, cfg.num_relations, n.min(cfg.num_relations)).into_vec();
    let mut nodes = vec![Node::word(CLS, 0)];
    let (mut w, mut e, mut r) = (0, 0, 0);
    while nodes.len() < n {
        let pos = rng.random_range(0..cfg.max_pos as u32);
        match rng.random_range(0..3) {
            0 => {
                nodes.push(Node::word(NUM_SPECIAL + words[w] as u32, pos));
                w += 1;
            }
            1 => {
                nodes.push(Node::entity(ents[e] as u32, pos, rng.random_bool(0.5)));
                e += 1;
            }
            _ if r < rels.len() => {
                nodes.push(Node::relation(rels[r] as u32, pos));
                r += 1;
            }
            _ => {}
        }
    }
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        adj[i][i] = true;
        for j in 0..i {
            let c = rng.random_bool(p);
            adj[i][j] = c;
            adj[j][i] = c;
        }
    }
    RandomGraph { graph: WkGraph::from_parts(nodes, adj.clone()), adj }
}

/// Every entity row (mask row included) drawn from N(0, std²).
pub fn random_rows(cfg: &ModelConfig, std: f64, rng: &mut Rng) -> EntityRows<f64> {
    let normal = Normal::new(0.0, std).unwrap();
    let n = cfg.entity_rows();
    let rows = Array2::from_shape_simple_fn((n, cfg.d_model), || normal.sample(rng));
    EntityRows::new((0..n as u32).collect(), rows)
}

/// Hop distances from `src` in an adjacency matrix.
pub fn bfs(adj: &[Vec<bool>], src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for v in 0..adj.len() {
            if adj[u][v] && dist[v].is_none() {
                dist[v] = Some(dist[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

pub fn is_kind(g: &WkGraph, i: usize, kind: NodeKind) -> bool {
    g.node(i).kind == kind
}

/// The scaled synthetic completion experiment.
pub struct Experiment {
    pub corpus: Corpus,
    pub train: Corpus,
    pub splits: CompletionSplits,
    pub cfg: TrainConfig,
    pub state: TrainState,
    pub steps: usize,
    pub metrics_csv: Vec<u8>,
    pub transductive: RankingResult,
    pub inductive: RankingResult,
    pub majority_transductive: RankingResult,
    pub majority_inductive: RankingResult,
    pub seconds: f64,
}

pub const EXPERIMENT_STEPS: u64 = 2000;

pub fn experiment_config(seed: u64) -> TrainConfig {
    TrainConfig { epochs: 1000, max_steps: EXPERIMENT_STEPS, seed, ..TrainConfig::default() }
}

pub fn completion_experiment(seed: u64) -> Experiment {
    let start = Instant::now();
    let data = generate(&SyntheticConfig::default(), seed);
    let corpus = data.corpus().unwrap();
    let mut split_rng = rng::derive(seed, Stream::Split, &[]);
    let splits = make_completion_splits(&corpus.kg, &corpus.sentences, &SplitConfig::default(), &mut split_rng).unwrap();
    let train = corpus.restricted(splits.train_kg.clone(), &splits.train_sentences);
    let cfg = experiment_config(seed);
    let dir = tempfile::tempdir().unwrap();
    let report = run(&train, &cfg, &RunOutput { dir: Some(dir.path().to_path_buf()) }, None).unwrap();
    let metrics_csv = fs::read(dir.path().join("metrics.csv")).unwrap();
    let ev = Evaluator {
        params: &report.state.params,
        store: &report.state.store,
        kg: &splits.train_kg,
        cfg: EvalConfig { seed, max_neighbors: cfg.max_neighbors, max_tokens: cfg.max_tokens },
    };
    let transductive = ev.evaluate(&splits.transductive).unwrap();
    let inductive = ev.evaluate(&splits.inductive).unwrap();
    let majority_transductive = metrics(&majority_ranks(&splits.transductive, &splits.train_kg)).unwrap();
    let majority_inductive = metrics(&majority_ranks(&splits.inductive, &splits.train_kg)).unwrap();
    Experiment {
        corpus,
        train,
        steps: report.metrics.len(),
        state: report.state,
        splits,
        cfg,
        metrics_csv,
        transductive,
        inductive,
        majority_transductive,
        majority_inductive,
        seconds: start.elapsed().as_secs_f64(),
    }
}
