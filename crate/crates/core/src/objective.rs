//! Masked-node prediction over WK graphs.
//!
//! A sample is prepared in three moves: pick nodes to predict
//! ([`sample_mask_plan`]), possibly strip the knowledge context of masked
//! anchors ([`apply_anchor_dropout`]), then corrupt the chosen nodes
//! ([`apply_plan`]). Words and relations are scored against their whole
//! vocabulary; entities against one positive and `k` sampled negatives.

use ndarray::{Array1, Array2, ArrayView1};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use crate::encoder::{EncoderError, EntityRows, LossEval, ModelConfig, ModelParams};
use crate::graph::text::{CLS, MASK, NUM_SPECIAL, PAD};
use crate::graph::{NodeKind, WkGraph};
use crate::kg::NegativeTable;
use crate::rng::Rng;
use crate::Real;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ObjectiveError {
    #[error("graph has no maskable node")]
    NoMaskableNodes,
    #[error("no entity left to sample as a negative")]
    EmptySupport,
    #[error("entity {0} has no row among the candidates")]
    MissingCandidateRows(u32),
    #[error("invalid objective config: {0}")]
    InvalidConfig(String),
    #[error("plan does not fit the batch: {0}")]
    PlanMismatch(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub mask_rate: f64,
    /// Probabilities of MASK, RANDOM and KEEP for a selected node.
    pub split: [f64; 3],
    pub anchor_dropout_rate: f64,
    /// Negatives per masked entity.
    pub num_negatives: usize,
    /// Loss weight per node kind, indexed by [`NodeKind::index`].
    pub weights: [f64; 3],
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            mask_rate: 0.15,
            split: [0.8, 0.1, 0.1],
            anchor_dropout_rate: 0.5,
            num_negatives: 32,
            weights: [1.0; 3],
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let bad = |m: String| Err(ObjectiveError::InvalidConfig(m));
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !unit(self.mask_rate) || !unit(self.anchor_dropout_rate) || !self.split.iter().all(|&p| unit(p)) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        if (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("action split {:?} does not sum to 1", self.split));
        }
        if self.num_negatives == 0 {
            return bad("need at least one negative".into());
        }
        if !self.weights.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return bad("loss weights must be finite and non-negative".into());
        }
        Ok(())
    }
}

/// Vocabulary sizes the corruption step draws from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vocabs {
    pub words: usize,
    pub entities: usize,
    pub relations: usize,
}

impl Vocabs {
    pub fn of(cfg: &ModelConfig) -> Self {
        Self { words: cfg.word_vocab, entities: cfg.num_entities, relations: cfg.num_relations }
    }

    pub fn mask_id(&self, kind: NodeKind) -> u32 {
        match kind {
            NodeKind::Word => MASK,
            NodeKind::Entity => self.entities as u32,
            NodeKind::Relation => self.relations as u32,
        }
    }

    /// Ids a RANDOM replacement may use: specials are never drawn.
    fn random_range(&self, kind: NodeKind) -> (u32, u32) {
        match kind {
            NodeKind::Word => (NUM_SPECIAL, self.words as u32),
            NodeKind::Entity => (0, self.entities as u32),
            NodeKind::Relation => (0, self.relations as u32),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Mask,
    Random(u32),
    Keep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskEntry {
    pub node: usize,
    pub original: u32,
    pub kind: NodeKind,
    pub action: Action,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MaskPlan {
    pub entries: Vec<MaskEntry>,
}

impl MaskPlan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Follows a node renumbering; entries whose node disappeared are dropped.
    pub fn remap(&self, remap: &[Option<usize>]) -> Self {
        let entries = self
            .entries
            .iter()
            .filter_map(|e| remap[e.node].map(|node| MaskEntry { node, ..*e }))
            .collect();
        Self { entries }
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }
}

/// Every node except CLS and padding.
pub fn is_maskable(graph: &WkGraph, i: usize) -> bool {
    let n = graph.node(i);
    !(n.kind == NodeKind::Word && (n.token_id == CLS || n.token_id == PAD))
}

/// Selects each maskable node with probability `mask_rate` (at least one
/// overall) and draws its action.
pub fn sample_mask_plan(
    graph: &WkGraph,
    cfg: &ObjectiveConfig,
    vocabs: &Vocabs,
    rng: &mut Rng,
) -> Result<MaskPlan, ObjectiveError> {
    let maskable: Vec<usize> = (0..graph.len()).filter(|&i| is_maskable(graph, i)).collect();
    if maskable.is_empty() {
        return Err(ObjectiveError::NoMaskableNodes);
    }
    let mut chosen: Vec<usize> = maskable.iter().copied().filter(|_| rng.random::<f64>() < cfg.mask_rate).collect();
    if chosen.is_empty() {
        chosen.push(maskable[rng.random_range(0..maskable.len())]);
    }
    let entries = chosen
        .into_iter()
        .map(|i| {
            let node = graph.node(i);
            let u: f64 = rng.random();
            let action = if u < cfg.split[0] {
                Action::Mask
            } else if u < cfg.split[0] + cfg.split[1] {
                random_replacement(node.kind, node.token_id, vocabs, rng).map_or(Action::Keep, Action::Random)
            } else {
                Action::Keep
            };
            MaskEntry { node: i, original: node.token_id, kind: node.kind, action }
        })
        .collect();
    Ok(MaskPlan { entries })
}

/// Uniform over the kind's vocabulary minus `original`; `None` if nothing
/// else exists.
fn random_replacement(kind: NodeKind, original: u32, vocabs: &Vocabs, rng: &mut Rng) -> Option<u32> {
    let (lo, hi) = vocabs.random_range(kind);
    let excluded = (lo..hi).contains(&original);
    let size = (hi - lo) - excluded as u32;
    if size == 0 {
        return None;
    }
    let mut id = lo + rng.random_range(0..size);
    if excluded && id >= original {
        id += 1;
    }
    Some(id)
}

/// With probability `rate`, independently for each anchor in `anchors`,
/// removes the anchor's relation nodes and any non-anchor entity left with
/// no relation neighbour. Returns the new graph and the node renumbering.
pub fn apply_anchor_dropout(
    graph: &WkGraph,
    anchors: &[usize],
    rate: f64,
    rng: &mut Rng,
) -> (WkGraph, Vec<Option<usize>>) {
    let n = graph.len();
    let mut keep = vec![true; n];
    for &a in anchors {
        if rng.random::<f64>() < rate {
            for r in graph.owned_relations(a) {
                keep[r] = false;
            }
        }
    }
    if keep.iter().all(|&k| k) {
        return (graph.clone(), (0..n).map(Some).collect());
    }
    for i in 0..n {
        let node = graph.node(i);
        if node.kind == NodeKind::Entity && !node.anchor {
            let live = graph.neighbors(i).any(|j| keep[j] && graph.node(j).kind == NodeKind::Relation);
            if !live {
                keep[i] = false;
            }
        }
    }
    graph.retain(&keep)
}

/// Writes the corrupted token ids into a copy of `graph`.
pub fn apply_plan(graph: &WkGraph, plan: &MaskPlan, vocabs: &Vocabs) -> WkGraph {
    let mut g = graph.clone();
    for e in &plan.entries {
        match e.action {
            Action::Mask => g.node_mut(e.node).token_id = vocabs.mask_id(e.kind),
            Action::Random(id) => g.node_mut(e.node).token_id = id,
            Action::Keep => {}
        }
    }
    g
}

/// Plan, anchor dropout on masked anchors, corruption. The returned plan
/// indexes the returned graph.
pub fn prepare_sample(
    graph: &WkGraph,
    cfg: &ObjectiveConfig,
    vocabs: &Vocabs,
    rng: &mut Rng,
) -> Result<(WkGraph, MaskPlan), ObjectiveError> {
    let plan = sample_mask_plan(graph, cfg, vocabs, rng)?;
    let masked_anchors: Vec<usize> = plan
        .entries
        .iter()
        .filter(|e| graph.node(e.node).anchor)
        .map(|e| e.node)
        .collect();
    let (dropped, remap) = apply_anchor_dropout(graph, &masked_anchors, cfg.anchor_dropout_rate, rng);
    let plan = plan.remap(&remap);
    let corrupted = apply_plan(&dropped, &plan, vocabs);
    Ok((corrupted, plan))
}

/// Draws negatives from a fixed table, skipping excluded ids.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    probs: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl NegativeSampler {
    pub fn new(table: &NegativeTable) -> Result<Self, ObjectiveError> {
        let probs = table.probs().to_vec();
        let index = WeightedIndex::new(&probs).map_err(|_| ObjectiveError::EmptySupport)?;
        Ok(Self { probs, index })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `k` i.i.d. draws from the table renormalised over ids not in
    /// `exclude`.
    pub fn sample(&self, k: usize, exclude: &[u32], rng: &mut Rng) -> Result<Vec<u32>, ObjectiveError> {
        let excluded_mass: f64 = exclude
            .iter()
            .filter_map(|&e| self.probs.get(e as usize))
            .sum::<f64>()
            .min(1.0);
        let remaining: f64 = self
            .probs
            .iter()
            .enumerate()
            .filter(|(i, _)| !exclude.contains(&(*i as u32)))
            .map(|(_, p)| p)
            .sum();
        if remaining <= 0.0 {
            return Err(ObjectiveError::EmptySupport);
        }
        if excluded_mass > 0.5 {
            let w: Vec<f64> = self
                .probs
                .iter()
                .enumerate()
                .map(|(i, &p)| if exclude.contains(&(i as u32)) { 0.0 } else { p })
                .collect();
            let idx = WeightedIndex::new(&w).map_err(|_| ObjectiveError::EmptySupport)?;
            return Ok((0..k).map(|_| idx.sample(rng) as u32).collect());
        }
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let id = self.index.sample(rng) as u32;
            if !exclude.contains(&id) {
                out.push(id);
            }
        }
        Ok(out)
    }
}

/// Candidate lists for a batch: for each entity entry of each plan, the
/// positive followed by `k` negatives.
pub fn sample_candidates(
    plans: &[MaskPlan],
    sampler: &NegativeSampler,
    k: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<Vec<u32>>>, ObjectiveError> {
    plans
        .iter()
        .map(|plan| {
            plan.entries
                .iter()
                .filter(|e| e.kind == NodeKind::Entity)
                .map(|e| {
                    let mut c = vec![e.original];
                    c.extend(sampler.sample(k, &[e.original], rng)?);
                    Ok(c)
                })
                .collect()
        })
        .collect()
}

/// Per-kind mean losses and counts for one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean cross-entropy per kind, zero when a kind has no entries.
    pub per_kind: [f64; 3],
    pub counts: [usize; 3],
}

impl LossBreakdown {
    pub fn word(&self) -> f64 {
        self.per_kind[NodeKind::Word.index()]
    }

    pub fn entity(&self) -> f64 {
        self.per_kind[NodeKind::Entity.index()]
    }

    pub fn relation(&self) -> f64 {
        self.per_kind[NodeKind::Relation.index()]
    }
}

/// Logits of the word head for one node state.
pub fn word_logits<T: Real>(h: ArrayView1<'_, T>, params: &ModelParams<T>) -> Array1<T> {
    h.dot(&params.word_head_w) + &params.word_head_b
}

/// Logits of the relation head for one node state.
pub fn relation_logits<T: Real>(h: ArrayView1<'_, T>, params: &ModelParams<T>) -> Array1<T> {
    h.dot(&params.rel_head_w) + &params.rel_head_b
}

/// Projected query vector of the entity head.
pub fn entity_query<T: Real>(h: ArrayView1<'_, T>, params: &ModelParams<T>) -> Array1<T> {
    h.dot(&params.ent_proj_w) + &params.ent_proj_b
}

/// Softmax probabilities and `-log p[target]`, computed stably.
pub fn softmax_ce<T: Real>(logits: &Array1<T>, target: usize) -> (Array1<T>, T) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exp = logits.mapv(|v| (v - max).exp());
    let z = exp.sum();
    let ce = z.ln() - (logits[target] - max);
    (exp / z, ce)
}

/// Cross-entropy of every plan entry against its original id, averaged over
/// all entries with per-kind weights, plus gradients for the heads, the node
/// states and the candidate entity rows.
pub fn loss<T: Real>(
    hidden: &[Array2<T>],
    plans: &[MaskPlan],
    candidates: &[Vec<Vec<u32>>],
    params: &ModelParams<T>,
    rows: &EntityRows<T>,
    cfg: &ObjectiveConfig,
) -> Result<LossEval<T, LossBreakdown>, ObjectiveError> {
    if hidden.len() != plans.len() || candidates.len() != plans.len() {
        return Err(ObjectiveError::PlanMismatch(format!(
            "{} graphs, {} plans, {} candidate lists",
            hidden.len(),
            plans.len(),
            candidates.len()
        )));
    }
    let total_entries: usize = plans.iter().map(MaskPlan::len).sum();
    let mut grads = params.zeros_like();
    let mut entity_grads = rows.zeros_like();
    let mut d_hidden: Vec<Array2<T>> = hidden.iter().map(|h| Array2::zeros(h.raw_dim())).collect();
    let mut sums = [0.0f64; 3];
    let mut counts = [0usize; 3];
    let mut total = T::zero();
    let inv_n = if total_entries == 0 { T::zero() } else { T::one() / T::of(total_entries as f64) };

    for (g, ((h, plan), cands)) in hidden.iter().zip(plans).zip(candidates).enumerate() {
        let mut cands = cands.iter();
        for e in &plan.entries {
            if e.node >= h.nrows() {
                return Err(ObjectiveError::PlanMismatch(format!("node {} beyond {} rows", e.node, h.nrows())));
            }
            let hrow = h.row(e.node);
            let w = T::of(cfg.weights[e.kind.index()]);
            let scale = w * inv_n;
            let ce = match e.kind {
                NodeKind::Word | NodeKind::Relation => {
                    let (hw, hb) = match e.kind {
                        NodeKind::Word => (&params.word_head_w, &params.word_head_b),
                        _ => (&params.rel_head_w, &params.rel_head_b),
                    };
                    let target = e.original as usize;
                    if target >= hb.len() {
                        return Err(EncoderError::IdOutOfRange { kind: e.kind, id: e.original, size: hb.len() }.into());
                    }
                    let logits = hrow.dot(hw) + hb;
                    let (mut dl, ce) = softmax_ce(&logits, target);
                    dl[target] -= T::one();
                    dl.mapv_inplace(|v| v * scale);
                    let (gw, gb) = match e.kind {
                        NodeKind::Word => (&mut grads.word_head_w, &mut grads.word_head_b),
                        _ => (&mut grads.rel_head_w, &mut grads.rel_head_b),
                    };
                    outer_add(gw, hrow, dl.view());
                    *gb += &dl;
                    d_hidden[g].row_mut(e.node).scaled_add(T::one(), &hw.dot(&dl));
                    ce
                }
                NodeKind::Entity => {
                    let ids = cands
                        .next()
                        .ok_or_else(|| ObjectiveError::PlanMismatch("missing entity candidates".into()))?;
                    if ids.first() != Some(&e.original) {
                        return Err(ObjectiveError::PlanMismatch("positive must lead its candidates".into()));
                    }
                    let slots = ids
                        .iter()
                        .map(|&id| rows.slot(id).ok_or(ObjectiveError::MissingCandidateRows(id)))
                        .collect::<Result<Vec<_>, _>>()?;
                    let z = entity_query(hrow, params);
                    let logits: Array1<T> = slots.iter().map(|&s| rows.rows().row(s).dot(&z)).collect();
                    let (mut dl, ce) = softmax_ce(&logits, 0);
                    dl[0] -= T::one();
                    dl.mapv_inplace(|v| v * scale);
                    let mut dz = Array1::zeros(z.len());
                    for (&s, &d) in slots.iter().zip(dl.iter()) {
                        dz.scaled_add(d, &rows.rows().row(s));
                        entity_grads.row_mut(s).scaled_add(d, &z);
                    }
                    outer_add(&mut grads.ent_proj_w, hrow, dz.view());
                    grads.ent_proj_b += &dz;
                    d_hidden[g].row_mut(e.node).scaled_add(T::one(), &params.ent_proj_w.dot(&dz));
                    ce
                }
            };
            let k = e.kind.index();
            sums[k] += ce.to_f64().unwrap_or(f64::NAN);
            counts[k] += 1;
            total += scale * ce;
        }
    }
    let mut per_kind = [0.0; 3];
    for k in 0..3 {
        if counts[k] > 0 {
            per_kind[k] = sums[k] / counts[k] as f64;
        }
    }
    let extra = LossBreakdown { total: total.to_f64().unwrap_or(f64::NAN), per_kind, counts };
    Ok(LossEval { loss: total, d_hidden, param_grads: grads, entity_grads, extra })
}

fn outer_add<T: Real>(m: &mut Array2<T>, a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) {
    for (i, &x) in a.iter().enumerate() {
        if x != T::zero() {
            m.row_mut(i).scaled_add(x, &b);
        }
    }
}
