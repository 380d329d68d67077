//! Cross-module properties: graphs built from a real corpus, encoder padding,
//! corruption, and checkpoint/resume through the training loop.

mod support;

use std::collections::HashSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use tempfile::TempDir;

use wklm::corpus::Corpus;
use wklm::encoder::{forward, forward_padded, ModelConfig, ModelParams};
use wklm::graph::{to_batch, NodeKind};
use wklm::objective::{prepare_sample, Action, ObjectiveConfig, Vocabs};
use wklm::rng;
use wklm::synthetic::{generate, SyntheticConfig};
use wklm::trainer::{run, training_graph, RunOutput, TrainConfig, TrainState};

fn corpus() -> &'static Corpus {
    static C: OnceLock<Corpus> = OnceLock::new();
    C.get_or_init(|| generate(&SyntheticConfig::default(), 11).corpus().unwrap())
}

fn tiny() -> TrainConfig {
    TrainConfig { d_model: 16, num_heads: 2, d_ff: 32, batch_size: 8, num_negatives: 4, ..TrainConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn training_graphs_only_hold_known_facts(idx in 0usize..2060, epoch in 0u64..4, max_neighbors in 1usize..6) {
        let c = corpus();
        let cfg = TrainConfig { max_neighbors, ..TrainConfig::default() };
        let g = training_graph(c, &cfg, epoch, idx).unwrap();
        g.check_invariants().unwrap();

        let linked: HashSet<u32> = c.sentences[idx].linked_entities().collect();
        let anchors: HashSet<u32> = g.anchors().map(|a| g.node(a).token_id).collect();
        prop_assert_eq!(&anchors, &linked);

        for a in g.anchors() {
            let owned = g.owned_relations(a);
            prop_assert!(owned.len() <= max_neighbors);
            for r in owned {
                let tail = g.neighbors(r).find(|&j| j != a && j != r).unwrap();
                let (h, rel, t) = (g.node(a).token_id, g.node(r).token_id, g.node(tail).token_id);
                prop_assert!(c.kg.contains(h, rel, t), "({h}, {rel}, {t}) is not a fact");
            }
        }
        // Same coordinates, same graph.
        prop_assert_eq!(g, training_graph(c, &cfg, epoch, idx).unwrap());
    }

    #[test]
    fn padding_does_not_change_node_states(seed in any::<u64>(), n in 2usize..10, extra in 0usize..6, p in 0.0f64..1.0) {
        let cfg = ModelConfig { d_model: 8, num_heads: 2, d_ff: 16, ..ModelConfig::small(40, 6, 12) };
        let mut r = rng::seeded(seed);
        let params = ModelParams::<f64>::init(cfg, &mut r);
        let rows = support::random_rows(&cfg, 0.5, &mut r);
        let g = support::random_graph(&mut r, n, &cfg, p).graph;
        let batch = to_batch::<f64>(&[g], n + extra).unwrap();
        let trimmed = &forward(&batch, &params, &rows).unwrap()[0];
        let padded = forward_padded(&batch.graphs[0], &params, &rows).unwrap();
        for i in 0..n {
            for k in 0..cfg.d_model {
                prop_assert!((trimmed[[i, k]] - padded[[i, k]]).abs() < 1e-12);
            }
        }
        for i in n..n + extra {
            prop_assert!(padded.row(i).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn corruption_points_at_surviving_nodes(idx in 0usize..2060, seed in any::<u64>()) {
        let c = corpus();
        let g = training_graph(c, &TrainConfig::default(), 0, idx).unwrap();
        let model = tiny().model(c.words.len(), c.kg.num_relations(), c.kg.num_entities());
        let vocabs = Vocabs::of(&model);
        let obj = ObjectiveConfig { anchor_dropout_rate: 1.0, ..ObjectiveConfig::default() };
        let (masked, plan) = prepare_sample(&g, &obj, &vocabs, &mut rng::seeded(seed)).unwrap();
        prop_assert!(masked.len() <= g.len());
        // Masked entities share the mask id, so only the restored graph has
        // to satisfy the clean-graph invariants.
        let mut restored = masked.clone();
        for e in &plan.entries {
            restored.node_mut(e.node).token_id = e.original;
        }
        restored.check_invariants().unwrap();
        for e in &plan.entries {
            let node = masked.node(e.node);
            prop_assert_eq!(node.kind, e.kind);
            match e.action {
                Action::Mask => prop_assert_eq!(node.token_id, vocabs.mask_id(e.kind)),
                Action::Random(id) => prop_assert_eq!(node.token_id, id),
                Action::Keep => prop_assert_eq!(node.token_id, e.original),
            }
        }
        // With certain dropout, every surviving relation belongs to an
        // anchor the plan left alone.
        let selected: HashSet<usize> = plan.entries.iter().map(|e| e.node).collect();
        for a in masked.anchors() {
            if selected.contains(&a) {
                prop_assert!(masked.owned_relations(a).is_empty());
            }
        }
        for i in 0..masked.len() {
            if masked.node(i).kind == NodeKind::Relation {
                prop_assert!(masked.neighbors(i).any(|j| masked.node(j).anchor && !selected.contains(&j)));
            }
        }
    }
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let c = corpus();
    let cfg = TrainConfig { epochs: 5, ..tiny() };
    let whole = run(c, &TrainConfig { max_steps: 8, ..cfg }, &RunOutput::default(), None).unwrap();

    let tmp = TempDir::new().unwrap();
    let out = RunOutput { dir: Some(tmp.path().to_path_buf()) };
    let first = run(c, &TrainConfig { max_steps: 5, ..cfg }, &out, None).unwrap();
    assert_eq!(first.state.step, 5);
    let loaded = TrainState::load(&tmp.path().join("final"), cfg.adamw()).unwrap();
    assert_eq!(loaded, first.state);
    let rest = run(c, &TrainConfig { max_steps: 8, ..cfg }, &out, Some(loaded)).unwrap();

    assert_eq!(rest.state, whole.state);
    assert_eq!(rest.metrics[..], whole.metrics[5..]);
    let csv = std::fs::read_to_string(tmp.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
}

#[test]
fn resume_rejects_a_different_model() {
    let c = corpus();
    let state = TrainState::init(tiny().model(5, 2, 3), tiny().adamw(), 1).unwrap();
    assert!(run(c, &TrainConfig { max_steps: 1, ..tiny() }, &RunOutput::default(), Some(state)).is_err());
}

#[test]
fn epochs_reshuffle_but_reproduce() {
    let c = corpus();
    // One fact per anchor, so the sample has to change with the epoch.
    let cfg = TrainConfig { max_neighbors: 1, ..TrainConfig::default() };
    let linked: Vec<usize> = c.linked().map(|(i, _)| i).take(40).collect();
    let mut differ = 0;
    for &i in &linked {
        let a = training_graph(c, &cfg, 0, i).unwrap();
        let b = training_graph(c, &cfg, 1, i).unwrap();
        differ += (a != b) as usize;
        assert_eq!(a.anchors().count(), b.anchors().count());
    }
    // Neighbour sampling differs between epochs for some sentences.
    assert!(differ > 0);
}
