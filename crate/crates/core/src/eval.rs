//! Relation completion and cloze probing on a trained model.
//!
//! A completion query is a sentence mentioning a head and a tail entity; the
//! model sees the sentence's graph with a masked relation node joining head
//! and tail and must rank the true relation. In the transductive setting
//! both entities were seen in training but this fact was held out. In the
//! inductive setting the head was never seen: its anchor carries the entity
//! mask token and a handful of known `(relation, tail)` facts instead.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead};
use std::path::Path;

use ndarray::Array1;
use rand::seq::SliceRandom;

use crate::corpus::Sentence;
use crate::encoder::{forward, EncoderError, ModelParams};
use crate::graph::text::{detokenize, tokenize, WordVocab, MASK};
use crate::graph::{link_mentions, to_batch, word_graph, BuildError, Link, Node, NodeKind, WkGraph};
use crate::kg::{AliasIndex, KgError, TripletStore};
use crate::objective::{relation_logits, word_logits};
use crate::param_store::{EmbeddingStore, StoreError};
use crate::rng::{self, Rng, Stream};
use crate::Real;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no ranks to summarise")]
    EmptyRanks,
    #[error("not enough data for {setting} queries: wanted {wanted}, found {found}")]
    InsufficientData { setting: Setting, wanted: usize, found: usize },
    #[error("query {0}: unseen head has no neighbour facts")]
    UnseenWithoutNeighbors(usize),
    #[error("probe {probe}: expected one masked word, found {count}")]
    MultipleMasks { probe: usize, count: usize },
    #[error("no probes given")]
    EmptyProbes,
    #[error("held-out data leaks into training: {0}")]
    Leak(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    Transductive,
    Inductive,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Transductive => "transductive",
            Setting::Inductive => "inductive",
        })
    }
}

impl std::str::FromStr for Setting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "transductive" => Ok(Setting::Transductive),
            "inductive" => Ok(Setting::Inductive),
            other => Err(format!("unknown setting `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Head {
    Known(u32),
    /// An entity outside the vocabulary, found in the sentence by its words.
    Unseen { surface: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionQuery {
    pub tokens: Vec<u32>,
    pub links: Vec<Link>,
    pub head: Head,
    pub tail: u32,
    pub relation: u32,
    pub setting: Setting,
    /// Known facts about an inductive head, as `(relation, tail)`.
    pub neighbors: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub ranks: Vec<usize>,
    pub mr: f64,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

impl RankingResult {
    pub fn hits(&self, k: usize) -> f64 {
        self.ranks.iter().filter(|&&r| r <= k).count() as f64 / self.ranks.len() as f64
    }

    /// Metric columns in the usual order: MR, MRR, HITS@1/3/10.
    pub fn summary_line(&self) -> String {
        format!(
            "MR {:.2} MRR {:.4} HITS@1 {:.4} HITS@3 {:.4} HITS@10 {:.4}",
            self.mr, self.mrr, self.hits1, self.hits3, self.hits10
        )
    }
}

/// MR, MRR and HITS@k of 1-based ranks.
pub fn metrics(ranks: &[usize]) -> Result<RankingResult, EvalError> {
    if ranks.is_empty() || ranks.contains(&0) {
        return Err(EvalError::EmptyRanks);
    }
    let n = ranks.len() as f64;
    let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(RankingResult {
        ranks: ranks.to_vec(),
        mr: ranks.iter().map(|&r| r as f64).sum::<f64>() / n,
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        hits1: hits(1),
        hits3: hits(3),
        hits10: hits(10),
    })
}

/// Ids sorted by descending score, ties by ascending id.
pub fn rank_ids<T: Real>(scores: &Array1<T>) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..scores.len() as u32).collect();
    ids.sort_by(|&a, &b| {
        let (x, y) = (scores[a as usize].to_f64().unwrap(), scores[b as usize].to_f64().unwrap());
        y.total_cmp(&x).then(a.cmp(&b))
    });
    ids
}

/// 1-based position of `gold` in `ranked`.
pub fn rank_of(ranked: &[u32], gold: u32) -> usize {
    ranked.iter().position(|&r| r == gold).map_or(ranked.len() + 1, |i| i + 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// Facts sampled from the training graph for each sentence anchor.
    pub max_neighbors: usize,
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { max_neighbors: 15, max_tokens: 128, seed: 42 }
    }
}

fn find_span(tokens: &[u32], surface: &[u32], links: &[Link]) -> Option<usize> {
    if surface.is_empty() || surface.len() > tokens.len() {
        return None;
    }
    (0..=tokens.len() - surface.len()).find(|&i| {
        &tokens[i..i + surface.len()] == surface && !links.iter().any(|l| l.start < i + surface.len() && i < l.end)
    })
}

fn attach_context(g: &mut WkGraph, anchor: usize, kg: &TripletStore, k: usize, rng: &mut Rng) -> Result<(), EvalError> {
    let head = g.node(anchor).token_id;
    if head as usize >= kg.num_entities() {
        return Ok(());
    }
    for (r, t) in kg.neighbors(head, k, rng)? {
        if t != head {
            g.attach_triplet(anchor, r, t);
        }
    }
    Ok(())
}

/// The query graph and the index of its masked relation node.
///
/// Every sentence anchor except an inductive head gets sampled facts from
/// `kg`, as in training. The head is the anchor linked to it; failing that,
/// its words in the sentence; failing that, a new anchor appended after the
/// last word.
pub fn query_graph(
    q: &CompletionQuery,
    kg: &TripletStore,
    num_relations: usize,
    num_entities: usize,
    cfg: &EvalConfig,
    rng: &mut Rng,
) -> Result<(WkGraph, usize), EvalError> {
    let entity_mask = num_entities as u32;
    let n = q.tokens.len().min(cfg.max_tokens);
    let tokens = &q.tokens[..n];
    let mut links: Vec<Link> = q.links.iter().copied().filter(|l| l.end <= n).collect();
    let mut head_entity = match &q.head {
        Head::Known(id) => Some(*id),
        Head::Unseen { .. } => None,
    };
    let linked = head_entity.filter(|h| links.iter().any(|l| l.entity == *h));
    if linked.is_none() {
        if let Head::Unseen { surface } = &q.head {
            if let Some(start) = find_span(tokens, surface, &links) {
                links.push(Link { start, end: start + surface.len(), entity: entity_mask });
                head_entity = Some(entity_mask);
            }
        }
    }
    let (mut g, anchors) = word_graph(tokens, &links)?;
    let head = match head_entity.and_then(|h| g.find_entity(h)) {
        Some(a) => a,
        None => {
            let pos = g.nodes().iter().map(|n| n.position).max().unwrap_or(0) + 1;
            let id = match q.setting {
                Setting::Inductive => entity_mask,
                Setting::Transductive => head_entity.unwrap_or(entity_mask),
            };
            let a = g.add_node(Node::entity(id, pos, true));
            for j in 0..a {
                g.connect(a, j);
            }
            a
        }
    };
    let mut done = HashSet::new();
    for a in anchors {
        if (a == head && q.setting == Setting::Inductive) || !done.insert(a) {
            continue;
        }
        attach_context(&mut g, a, kg, cfg.max_neighbors, rng)?;
    }
    if q.setting == Setting::Inductive {
        g.node_mut(head).token_id = entity_mask;
        for &(r, t) in &q.neighbors {
            g.attach_triplet(head, r, t);
        }
    } else if !done.contains(&head) {
        attach_context(&mut g, head, kg, cfg.max_neighbors, rng)?;
    }
    let (rel, _) = g.attach_triplet(head, num_relations as u32, q.tail);
    Ok((g, rel))
}

/// Read-only access to a trained model.
pub struct Evaluator<'a, T> {
    pub params: &'a ModelParams<T>,
    pub store: &'a EmbeddingStore<T>,
    /// Training knowledge graph, source of anchor context.
    pub kg: &'a TripletStore,
    pub cfg: EvalConfig,
}

impl<T: Real> Evaluator<'_, T> {
    fn states(&self, g: &WkGraph) -> Result<ndarray::Array2<T>, EvalError> {
        let ids: Vec<u32> = g.nodes().iter().filter(|n| n.kind == NodeKind::Entity).map(|n| n.token_id).collect();
        let rows = self.store.gather(&ids)?;
        let batch = to_batch::<T>(std::slice::from_ref(g), g.len())?;
        Ok(forward(&batch, self.params, &rows)?.remove(0))
    }

    /// All relation ids, best first. `index` keys the context sampling.
    pub fn completion_rank(&self, q: &CompletionQuery, index: usize) -> Result<Vec<u32>, EvalError> {
        if q.setting == Setting::Inductive && q.neighbors.is_empty() {
            return Err(EvalError::UnseenWithoutNeighbors(index));
        }
        let c = &self.params.config;
        let mut rng = rng::derive(self.cfg.seed, Stream::Eval, &[index as u64]);
        let (g, rel) = query_graph(q, self.kg, c.num_relations, c.num_entities, &self.cfg, &mut rng)?;
        let h = self.states(&g)?;
        Ok(rank_ids(&relation_logits(h.row(rel), self.params)))
    }

    /// Rank of the gold relation for every query.
    pub fn ranks(&self, queries: &[CompletionQuery]) -> Result<Vec<usize>, EvalError> {
        queries
            .iter()
            .enumerate()
            .map(|(i, q)| Ok(rank_of(&self.completion_rank(q, i)?, q.relation)))
            .collect()
    }

    pub fn evaluate(&self, queries: &[CompletionQuery]) -> Result<RankingResult, EvalError> {
        metrics(&self.ranks(queries)?)
    }

    /// Fraction of probes whose gold word gets the top word-head score at
    /// the masked position.
    pub fn cloze_p_at_1(&self, probes: &[ClozeProbe]) -> Result<f64, EvalError> {
        if probes.is_empty() {
            return Err(EvalError::EmptyProbes);
        }
        let mut hits = 0usize;
        for (i, p) in probes.iter().enumerate() {
            let count = p.tokens.iter().filter(|&&t| t == MASK).count();
            if count != 1 {
                return Err(EvalError::MultipleMasks { probe: i, count });
            }
            let mut rng = rng::derive(self.cfg.seed, Stream::Eval, &[u64::MAX, i as u64]);
            let (mut g, anchors) = word_graph(&p.tokens, &p.links)?;
            let mut done = HashSet::new();
            for a in anchors {
                if done.insert(a) {
                    attach_context(&mut g, a, self.kg, self.cfg.max_neighbors, &mut rng)?;
                }
            }
            let slot = g
                .nodes()
                .iter()
                .position(|n| n.kind == NodeKind::Word && n.token_id == MASK)
                .ok_or(EvalError::MultipleMasks { probe: i, count: 0 })?;
            let h = self.states(&g)?;
            if rank_ids(&word_logits(h.row(slot), self.params))[0] == p.gold {
                hits += 1;
            }
        }
        Ok(hits as f64 / probes.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClozeProbe {
    pub tokens: Vec<u32>,
    pub links: Vec<Link>,
    pub gold: u32,
}

impl ClozeProbe {
    /// Tokenizes `text` (with one literal `[MASK]`) and links its mentions.
    pub fn new(text: &str, gold: u32, words: &WordVocab, aliases: &AliasIndex) -> Self {
        let tokens = tokenize(text, words);
        let links = link_mentions(&tokens, aliases);
        Self { tokens, links, gold }
    }
}

/// Ranks from always predicting relations in order of training frequency.
pub fn majority_ranks(queries: &[CompletionQuery], train: &TripletStore) -> Vec<usize> {
    let mut counts = vec![0usize; train.num_relations()];
    for (_, r, _) in train.triplets() {
        counts[r as usize] += 1;
    }
    let mut order: Vec<u32> = (0..counts.len() as u32).collect();
    order.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
    queries.iter().map(|q| rank_of(&order, q.relation)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitConfig {
    pub transductive_facts: usize,
    pub queries_per_fact: usize,
    pub inductive_entities: usize,
    pub queries_per_entity: usize,
    /// Cap on the facts attached to an inductive head.
    pub max_neighbors: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            transductive_facts: 100,
            queries_per_fact: 2,
            inductive_entities: 25,
            queries_per_entity: 2,
            max_neighbors: 15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompletionSplits {
    /// Same vocabularies as the input graph, held-out facts removed.
    pub train_kg: TripletStore,
    /// Indices of sentences still available for training.
    pub train_sentences: Vec<usize>,
    pub transductive: Vec<CompletionQuery>,
    pub inductive: Vec<CompletionQuery>,
    /// Entities whose every fact and sentence was held out.
    pub unseen: Vec<u32>,
}

fn pair(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

/// Holds out facts and entities for completion queries.
///
/// Only facts whose entity pair is joined by no other fact are used, so a
/// sentence mentioning both entities can only be about that fact.
/// Inductive entities lose every fact they take part in and every sentence
/// mentioning them; each query keeps the entity's remaining facts as
/// neighbours. Transductive facts are removed together with every sentence
/// mentioning both of their entities, and only while both entities and the
/// relation keep at least one other fact.
pub fn make_completion_splits(
    kg: &TripletStore,
    sentences: &[Sentence],
    cfg: &SplitConfig,
    rng: &mut Rng,
) -> Result<CompletionSplits, EvalError> {
    let facts: Vec<(u32, u32, u32)> = kg.triplets().collect();
    let mut pair_count: HashMap<(u32, u32), usize> = HashMap::new();
    for &(h, _, t) in &facts {
        *pair_count.entry(pair(h, t)).or_default() += 1;
    }
    let mut pair_sentences: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    let mut entity_sentences: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, s) in sentences.iter().enumerate() {
        let mut ents: Vec<u32> = s.linked_entities().collect();
        ents.sort_unstable();
        ents.dedup();
        for (a, &x) in ents.iter().enumerate() {
            entity_sentences.entry(x).or_default().push(i);
            for &y in &ents[a + 1..] {
                pair_sentences.entry(pair(x, y)).or_default().push(i);
            }
        }
    }
    let unique = |h: u32, t: u32| h != t && pair_count.get(&pair(h, t)) == Some(&1);

    // Inductive entities: at least two outgoing facts, at least one of which
    // is voiced by a sentence; no two selected entities share a fact.
    let mut candidates: Vec<u32> = (0..kg.num_entities() as u32)
        .filter(|&e| {
            let out = kg.outgoing(e).unwrap_or(&[]);
            out.len() >= 2
                && out
                    .iter()
                    .any(|&(_, t)| unique(e, t) && pair_sentences.contains_key(&pair(e, t)))
        })
        .collect();
    candidates.shuffle(rng);
    let mut touches: HashMap<u32, HashSet<u32>> = HashMap::new();
    for &(h, _, t) in &facts {
        touches.entry(h).or_default().insert(t);
        touches.entry(t).or_default().insert(h);
    }
    let mut unseen: Vec<u32> = Vec::new();
    let mut unseen_set = HashSet::new();
    for e in candidates {
        if unseen.len() == cfg.inductive_entities {
            break;
        }
        if touches[&e].iter().any(|n| unseen_set.contains(n)) {
            continue;
        }
        unseen.push(e);
        unseen_set.insert(e);
    }

    let mut withheld_sentences: HashSet<usize> = HashSet::new();
    for e in &unseen {
        withheld_sentences.extend(entity_sentences.get(e).into_iter().flatten().copied());
    }
    let mut remaining: Vec<(u32, u32, u32)> = facts
        .iter()
        .copied()
        .filter(|(h, _, t)| !unseen_set.contains(h) && !unseen_set.contains(t))
        .collect();

    let mut degree: HashMap<u32, usize> = HashMap::new();
    let mut rel_count: HashMap<u32, usize> = HashMap::new();
    for &(h, r, t) in &remaining {
        *degree.entry(h).or_default() += 1;
        *degree.entry(t).or_default() += 1;
        *rel_count.entry(r).or_default() += 1;
    }
    let mut order: Vec<usize> = (0..remaining.len()).collect();
    order.shuffle(rng);
    let mut held: HashSet<usize> = HashSet::new();
    let mut transductive = Vec::new();
    for i in order {
        if held.len() == cfg.transductive_facts {
            break;
        }
        let (h, r, t) = remaining[i];
        if !unique(h, t) || degree[&h] < 2 || degree[&t] < 2 || rel_count[&r] < 2 {
            continue;
        }
        let voiced: Vec<usize> = pair_sentences
            .get(&pair(h, t))
            .into_iter()
            .flatten()
            .copied()
            .filter(|s| !withheld_sentences.contains(s))
            .collect();
        if voiced.len() < cfg.queries_per_fact {
            continue;
        }
        held.insert(i);
        *degree.get_mut(&h).unwrap() -= 1;
        *degree.get_mut(&t).unwrap() -= 1;
        *rel_count.get_mut(&r).unwrap() -= 1;
        for &s in voiced.iter().take(cfg.queries_per_fact) {
            transductive.push(query_from(&sentences[s], Head::Known(h), r, t, Setting::Transductive, vec![]));
        }
        withheld_sentences.extend(voiced);
    }
    let found = held.len();
    if found < cfg.transductive_facts {
        return Err(EvalError::InsufficientData {
            setting: Setting::Transductive,
            wanted: cfg.transductive_facts * cfg.queries_per_fact,
            found: transductive.len(),
        });
    }
    remaining = remaining
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !held.contains(i))
        .map(|(_, f)| f)
        .collect();
    let train_kg = TripletStore::from_triplets(kg.entities().clone(), kg.relations().clone(), remaining)?;

    let mut inductive = Vec::new();
    for &e in &unseen {
        let out = kg.outgoing(e)?;
        let mut made = 0;
        for &(r, t) in out {
            if made == cfg.queries_per_entity {
                break;
            }
            if !unique(e, t) || train_kg.entity_freq(t) == 0 {
                continue;
            }
            let neighbors: Vec<(u32, u32)> = out
                .iter()
                .copied()
                .filter(|&(_, x)| x != t && x != e && train_kg.entity_freq(x) > 0)
                .take(cfg.max_neighbors)
                .collect();
            if neighbors.is_empty() {
                continue;
            }
            if let Some(&s) = pair_sentences.get(&pair(e, t)).and_then(|v| v.first()) {
                inductive.push(query_from(&sentences[s], Head::Known(e), r, t, Setting::Inductive, neighbors));
                made += 1;
            }
        }
    }
    let wanted = cfg.inductive_entities * cfg.queries_per_entity;
    if unseen.len() < cfg.inductive_entities || inductive.len() < wanted {
        return Err(EvalError::InsufficientData { setting: Setting::Inductive, wanted, found: inductive.len() });
    }
    let train_sentences = (0..sentences.len()).filter(|i| !withheld_sentences.contains(i)).collect();
    let splits = CompletionSplits { train_kg, train_sentences, transductive, inductive, unseen };
    check_leaks(&splits, sentences).map_err(EvalError::Leak)?;
    Ok(splits)
}

fn query_from(
    s: &Sentence,
    head: Head,
    relation: u32,
    tail: u32,
    setting: Setting,
    neighbors: Vec<(u32, u32)>,
) -> CompletionQuery {
    CompletionQuery { tokens: s.tokens.clone(), links: s.links.clone(), head, tail, relation, setting, neighbors }
}

/// No query fact is a training fact, no unseen entity occurs in a training
/// fact or training sentence, and no query sentence is a training sentence.
pub fn check_leaks(splits: &CompletionSplits, sentences: &[Sentence]) -> Result<(), String> {
    for q in splits.transductive.iter().chain(&splits.inductive) {
        if let Head::Known(h) = q.head {
            if splits.train_kg.contains(h, q.relation, q.tail) {
                return Err(format!("query fact ({h}, {}, {}) is in the training graph", q.relation, q.tail));
            }
        }
    }
    let unseen: HashSet<u32> = splits.unseen.iter().copied().collect();
    for q in &splits.inductive {
        match q.head {
            Head::Known(h) if !unseen.contains(&h) => return Err(format!("inductive head {h} is not held out")),
            _ => {}
        }
    }
    if let Some((h, r, t)) = splits
        .train_kg
        .triplets()
        .find(|(h, _, t)| unseen.contains(h) || unseen.contains(t))
    {
        return Err(format!("training fact ({h}, {r}, {t}) involves an unseen entity"));
    }
    let query_tokens: HashSet<&[u32]> = splits
        .transductive
        .iter()
        .chain(&splits.inductive)
        .map(|q| q.tokens.as_slice())
        .collect();
    for &i in &splits.train_sentences {
        let s = &sentences[i];
        if let Some(e) = s.linked_entities().find(|e| unseen.contains(e)) {
            return Err(format!("training sentence {i} mentions unseen entity {e}"));
        }
        if query_tokens.contains(s.tokens.as_slice()) {
            return Err(format!("training sentence {i} is also a query"));
        }
    }
    Ok(())
}

/// One query per line:
/// `sentence<TAB>head<TAB>relation<TAB>tail<TAB>setting[<TAB>rel:tail,...]`.
pub fn format_queries(queries: &[CompletionQuery], words: &WordVocab, kg: &TripletStore) -> String {
    let ent = |e: u32| kg.entities().name(e).unwrap_or("?").to_string();
    let rel = |r: u32| kg.relations().name(r).unwrap_or("?").to_string();
    let mut out = String::new();
    for q in queries {
        let head = match &q.head {
            Head::Known(h) => ent(*h),
            Head::Unseen { surface } => detokenize(surface, words),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}",
            detokenize(&q.tokens, words),
            head,
            rel(q.relation),
            ent(q.tail),
            q.setting
        ));
        if !q.neighbors.is_empty() {
            let n: Vec<String> = q.neighbors.iter().map(|&(r, t)| format!("{}:{}", rel(r), ent(t))).collect();
            out.push('\t');
            out.push_str(&n.join(","));
        }
        out.push('\n');
    }
    out
}

pub fn parse_queries<R: BufRead>(
    reader: R,
    words: &WordVocab,
    kg: &TripletStore,
    aliases: &AliasIndex,
) -> Result<Vec<CompletionQuery>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let err = |msg: String| EvalError::Parse { line: n, msg };
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if f.len() != 5 && f.len() != 6 {
            return Err(err(format!("expected 5 or 6 tab-separated fields, found {}", f.len())));
        }
        let setting: Setting = f[4].parse().map_err(err)?;
        let entity = |name: &str| kg.entities().id(name).ok_or_else(|| err(format!("unknown entity `{name}`")));
        let relation = |name: &str| kg.relations().id(name).ok_or_else(|| err(format!("unknown relation `{name}`")));
        let head = match (kg.entities().id(f[1]), setting) {
            (Some(h), _) => Head::Known(h),
            (None, Setting::Inductive) => Head::Unseen { surface: tokenize(f[1], words) },
            (None, Setting::Transductive) => return Err(err(format!("unknown entity `{}`", f[1]))),
        };
        let rel = relation(f[2])?;
        let tail = entity(f[3])?;
        let mut neighbors = Vec::new();
        if let Some(list) = f.get(5).filter(|s| !s.is_empty()) {
            for item in list.split(',') {
                let (r, t) = item
                    .split_once(':')
                    .ok_or_else(|| err(format!("neighbour `{item}` is not rel:tail")))?;
                neighbors.push((relation(r.trim())?, entity(t.trim())?));
            }
        }
        let tokens = tokenize(f[0], words);
        let links = link_mentions(&tokens, aliases);
        out.push(CompletionQuery { tokens, links, head, tail, relation: rel, setting, neighbors });
    }
    Ok(out)
}

pub fn load_queries(
    path: &Path,
    words: &WordVocab,
    kg: &TripletStore,
    aliases: &AliasIndex,
) -> Result<Vec<CompletionQuery>, EvalError> {
    parse_queries(io::BufReader::new(fs::File::open(path)?), words, kg, aliases)
}

/// Per-query ranks followed by a summary line.
pub fn write_results(path: &Path, queries: &[CompletionQuery], result: &RankingResult) -> io::Result<()> {
    let mut s = String::from("query,setting,relation,rank\n");
    for (i, (q, r)) in queries.iter().zip(&result.ranks).enumerate() {
        s.push_str(&format!("{i},{},{},{r}\n", q.setting, q.relation));
    }
    s.push_str(&format!(
        "summary,mr={:.4},mrr={:.4},hits1={:.4},hits3={:.4},hits10={:.4}\n",
        result.mr, result.mrr, result.hits1, result.hits3, result.hits10
    ));
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, s)
}
