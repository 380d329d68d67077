use crate::graph::link::Link;
use crate::graph::text::CLS;
use crate::graph::{Node, WkGraph};
use crate::kg::{KgError, TripletStore};
use crate::rng::Rng;

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("mention spans overlap at token {0}")]
    OverlappingSpans(usize),
    #[error("mention span {start}..{end} out of range for {len} tokens")]
    SpanOutOfRange { start: usize, end: usize, len: usize },
    #[error("graph {index} has {len} nodes, more than the padded size {pad_to}")]
    GraphTooLarge { index: usize, len: usize, pad_to: usize },
    #[error(transparent)]
    Kg(#[from] KgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuilderConfig {
    /// Cap on sampled triplets per anchor.
    pub max_neighbors: usize,
    /// Sentences longer than this are truncated before linking.
    pub max_tokens: usize,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self { max_neighbors: 15, max_tokens: 128 }
    }
}

fn validate(tokens: &[u32], links: &[Link]) -> Result<Vec<Link>, BuildError> {
    let mut sorted = links.to_vec();
    sorted.sort_by_key(|l| (l.start, l.end));
    let mut end = 0;
    for l in &sorted {
        if l.start >= l.end || l.end > tokens.len() {
            return Err(BuildError::SpanOutOfRange { start: l.start, end: l.end, len: tokens.len() });
        }
        if l.start < end {
            return Err(BuildError::OverlappingSpans(l.start));
        }
        end = l.end;
    }
    Ok(sorted)
}

/// The fully connected word graph with each mention collapsed into an anchor.
///
/// Node 0 is the CLS word at position 0; the remaining words and anchors take
/// positions `1..` in sentence order. A second mention of an entity already
/// anchored reuses that node, though it still consumes a position. Returns
/// the graph and the anchor node index of each link.
pub fn word_graph(tokens: &[u32], links: &[Link]) -> Result<(WkGraph, Vec<usize>), BuildError> {
    let links = validate(tokens, links)?;
    let mut g = WkGraph::new();
    g.add_node(Node::word(CLS, 0));
    let mut anchors = Vec::with_capacity(links.len());
    let mut pos = 1u32;
    let mut i = 0;
    let mut next_link = links.iter().peekable();
    while i < tokens.len() {
        match next_link.peek() {
            Some(l) if l.start == i => {
                let a = match g.find_entity(l.entity) {
                    Some(a) => a,
                    None => g.add_node(Node::entity(l.entity, pos, true)),
                };
                anchors.push(a);
                i = l.end;
                next_link.next();
            }
            _ => {
                g.add_node(Node::word(tokens[i], pos));
                i += 1;
            }
        }
        pos += 1;
    }
    let n = g.len();
    for a in 0..n {
        for b in a + 1..n {
            g.connect(a, b);
        }
    }
    Ok((g, anchors))
}

/// Builds the WK graph of one sentence: the word graph plus, for each anchor
/// in order, up to `cfg.max_neighbors` sampled outgoing triplets. Triplets
/// whose tail is the anchor itself are skipped.
pub fn build_graph(
    tokens: &[u32],
    links: &[Link],
    store: &TripletStore,
    cfg: &BuilderConfig,
    rng: &mut Rng,
) -> Result<WkGraph, BuildError> {
    let (mut g, anchors) = word_graph(tokens, links)?;
    let mut done = Vec::new();
    for a in anchors {
        if done.contains(&a) {
            continue;
        }
        done.push(a);
        let head = g.node(a).token_id;
        for (r, t) in store.neighbors(head, cfg.max_neighbors, rng)? {
            if t == head {
                continue;
            }
            g.attach_triplet(a, r, t);
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeKind;
    use crate::kg::{TripletStore, Vocab};
    use crate::rng;
    use proptest::prelude::*;

    fn kg(triplets: &[(&str, &str, &str)]) -> TripletStore {
        let mut e = Vocab::new();
        let mut r = Vocab::new();
        let ids: Vec<_> = triplets
            .iter()
            .map(|(h, rel, t)| (e.intern(h), r.intern(rel), e.intern(t)))
            .collect();
        TripletStore::from_triplets(e, r, ids).unwrap()
    }

    #[test]
    fn one_anchor_three_triplets() {
        let store = kg(&[("H", "a", "X"), ("H", "b", "Y"), ("H", "c", "Z")]);
        let h = store.entities().id("H").unwrap();
        // tokens: w0 MENTION w2 w3, mention at index 1.
        let tokens = [10, 11, 12, 13];
        let links = [Link { start: 1, end: 2, entity: h }];
        let cfg = BuilderConfig::default();
        let g = build_graph(&tokens, &links, &store, &cfg, &mut rng::seeded(0)).unwrap();

        // Hand-constructed expectation.
        let mut want = WkGraph::new();
        want.add_node(Node::word(CLS, 0));
        want.add_node(Node::word(10, 1));
        let a = want.add_node(Node::entity(h, 2, true));
        want.add_node(Node::word(12, 3));
        want.add_node(Node::word(13, 4));
        for i in 0..5 {
            for j in i + 1..5 {
                want.connect(i, j);
            }
        }
        for (rel, tail) in [("a", "X"), ("b", "Y"), ("c", "Z")] {
            let r = want.add_node(Node::relation(store.relations().id(rel).unwrap(), 3));
            want.connect(a, r);
            let t = want.add_node(Node::entity(store.entities().id(tail).unwrap(), 4, false));
            want.connect(r, t);
        }
        assert_eq!(g, want);
        assert_eq!(g.len(), 1 + 3 + 1 + 3 + 3);
        g.check_invariants().unwrap();
    }

    #[test]
    fn zero_neighbors_keeps_bare_anchor() {
        let store = kg(&[("H", "a", "X")]);
        let links = [Link { start: 0, end: 1, entity: 0 }];
        let cfg = BuilderConfig { max_neighbors: 0, ..Default::default() };
        let g = build_graph(&[5, 6], &links, &store, &cfg, &mut rng::seeded(0)).unwrap();
        assert_eq!(g.len(), 3);
        assert!(g.node(1).anchor);
        assert!(!g.is_anchor_free());
    }

    #[test]
    fn shared_tail_is_one_node() {
        let store = kg(&[("A", "r", "T"), ("B", "s", "T")]);
        let (a, b, t) = (0, 2, 1);
        assert_eq!(store.entities().id("T"), Some(t));
        let links = [Link { start: 0, end: 1, entity: a }, Link { start: 2, end: 3, entity: b }];
        let g = build_graph(&[9, 9, 9], &links, &store, &BuilderConfig::default(), &mut rng::seeded(0)).unwrap();
        // CLS, A, w, B, rel(A), T, rel(B)
        assert_eq!(g.len(), 7);
        let tail = g.find_entity(t).unwrap();
        let rels: Vec<usize> = g.neighbors(tail).collect();
        assert_eq!(rels.len(), 2);
        assert!(rels.iter().all(|&r| g.node(r).kind == NodeKind::Relation));
        assert_eq!(g.node(tail).position, g.node(1).position + 2);
        g.check_invariants().unwrap();
    }

    #[test]
    fn relation_between_two_anchors() {
        let store = kg(&[("A", "r", "B")]);
        let links = [Link { start: 0, end: 1, entity: 0 }, Link { start: 2, end: 3, entity: 1 }];
        let g = build_graph(&[9, 8, 9], &links, &store, &BuilderConfig::default(), &mut rng::seeded(0)).unwrap();
        assert_eq!(g.len(), 5);
        let r = 4;
        assert_eq!(g.node(r).kind, NodeKind::Relation);
        assert!(g.connected(r, 1) && g.connected(r, 3));
        assert!(!g.connected(r, 2));
        g.check_invariants().unwrap();
    }

    #[test]
    fn multi_token_mention_collapses() {
        let store = kg(&[("A", "r", "B")]);
        let links = [Link { start: 1, end: 3, entity: 0 }];
        let g = build_graph(&[7, 8, 8, 7], &links, &store, &BuilderConfig::default(), &mut rng::seeded(0)).unwrap();
        let pos: Vec<u32> = g.nodes().iter().map(|n| n.position).collect();
        // CLS w A w rel tail
        assert_eq!(pos, vec![0, 1, 2, 3, 3, 4]);
    }

    #[test]
    fn anchor_free_flagged() {
        let store = kg(&[("A", "r", "B")]);
        let g = build_graph(&[7, 8], &[], &store, &BuilderConfig::default(), &mut rng::seeded(0)).unwrap();
        assert!(g.is_anchor_free());
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn span_errors() {
        let store = kg(&[("A", "r", "B")]);
        let cfg = BuilderConfig::default();
        let bad = [Link { start: 0, end: 2, entity: 0 }, Link { start: 1, end: 3, entity: 1 }];
        assert!(matches!(
            build_graph(&[1, 2, 3], &bad, &store, &cfg, &mut rng::seeded(0)),
            Err(BuildError::OverlappingSpans(1))
        ));
        let oob = [Link { start: 2, end: 4, entity: 0 }];
        assert!(matches!(
            build_graph(&[1, 2, 3], &oob, &store, &cfg, &mut rng::seeded(0)),
            Err(BuildError::SpanOutOfRange { .. })
        ));
    }

    fn random_store(n_ent: usize, n_rel: usize, edges: &[(usize, usize, usize)]) -> TripletStore {
        let e = Vocab::from_names((0..n_ent).map(|i| format!("e{i}")));
        let r = Vocab::from_names((0..n_rel).map(|i| format!("r{i}")));
        let mut t: Vec<_> = edges
            .iter()
            .map(|&(h, rel, tl)| ((h % n_ent) as u32, (rel % n_rel) as u32, (tl % n_ent) as u32))
            .collect();
        t.push((0, 0, 1 % n_ent as u32));
        TripletStore::from_triplets(e, r, t).unwrap()
    }

    proptest! {
        #[test]
        fn built_graphs_satisfy_invariants(
            n_tokens in 0usize..10,
            edges in proptest::collection::vec((0usize..12, 0usize..4, 0usize..12), 0..40),
            mention_starts in proptest::collection::vec((0usize..10, 1usize..3, 0usize..12), 0..4),
            max_k in 0usize..6,
            seed in any::<u64>(),
        ) {
            let store = random_store(12, 4, &edges);
            let tokens: Vec<u32> = (0..n_tokens as u32).map(|i| 10 + i).collect();
            let mut links = Vec::new();
            let mut end = 0;
            let mut starts = mention_starts.clone();
            starts.sort();
            for (s, len, e) in starts {
                if s >= end && s + len <= n_tokens {
                    links.push(Link { start: s, end: s + len, entity: e as u32 });
                    end = s + len;
                }
            }
            let cfg = BuilderConfig { max_neighbors: max_k, ..Default::default() };
            let g = build_graph(&tokens, &links, &store, &cfg, &mut rng::seeded(seed)).unwrap();
            prop_assert!(g.check_invariants().is_ok(), "{:?}", g.check_invariants());
            let again = build_graph(&tokens, &links, &store, &cfg, &mut rng::seeded(seed)).unwrap();
            prop_assert_eq!(&g, &again);

            // Freshly added tails sit at (anchor + 2) with the relation at +1.
            for a in g.anchors().collect::<Vec<_>>() {
                let p = g.node(a).position;
                for r in g.owned_relations(a) {
                    prop_assert_eq!(g.node(r).position, p + 1);
                    let tail = g.neighbors(r).find(|&j| j != a).unwrap();
                    if !g.node(tail).anchor && g.neighbors(tail).count() == 1 {
                        prop_assert_eq!(g.node(tail).position, p + 2);
                    }
                }
                prop_assert!(g.owned_relations(a).len() <= max_k);
            }
        }
    }
}
