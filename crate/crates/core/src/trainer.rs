//! Pretraining loop.
//!
//! Each epoch shuffles the linked sentences, builds their graphs (on worker
//! threads when asked to), cuts them into batches and takes one optimizer
//! step per batch. Every random choice is derived from the seed and the
//! epoch, sentence or step number, so a run resumed from a checkpoint
//! replays exactly what the uninterrupted run would have done.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rand::seq::SliceRandom;

use crate::corpus::Corpus;
use crate::encoder::checkpoint::{self, CheckpointError};
use crate::encoder::{compute_gradients, EncoderError, ModelConfig, ModelParams};
use crate::graph::{build_graph, to_batch, BuildError, BuilderConfig, NodeKind, WkGraph};
use crate::kg::KgError;
use crate::objective::{
    loss, prepare_sample, sample_candidates, LossBreakdown, NegativeSampler, ObjectiveConfig, ObjectiveError, Vocabs,
};
use crate::optim::{AdamW, DenseAdamW};
use crate::param_store::{EmbeddingStore, StoreError};
use crate::rng::{self, Stream};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("non-finite loss at step {step}; no update applied")]
    NonFiniteLoss { step: u64 },
    #[error("batch is empty")]
    EmptyBatch,
}

impl From<EncoderError> for TrainError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::NonFiniteLoss => TrainError::NonFiniteLoss { step: 0 },
            other => TrainError::Objective(other.into()),
        }
    }
}

/// Everything a run needs besides data. Parsed from flat `key = value`
/// text whose keys are the field names.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Stop after this many optimizer steps; 0 means no cap.
    pub max_steps: u64,
    pub seed: u64,
    pub max_neighbors: usize,
    pub max_tokens: usize,
    pub mask_rate: f64,
    pub mask_prob: f64,
    pub random_prob: f64,
    pub keep_prob: f64,
    pub anchor_dropout_rate: f64,
    pub num_negatives: usize,
    pub word_weight: f64,
    pub entity_weight: f64,
    pub relation_weight: f64,
    pub clip_norm: f64,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_interval: u64,
    pub workers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub d_ff: usize,
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let o = ObjectiveConfig::default();
        let a = AdamW::default();
        Self {
            batch_size: 16,
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            weight_decay: a.weight_decay,
            epochs: 1,
            max_steps: 0,
            seed: 42,
            max_neighbors: 15,
            max_tokens: 128,
            mask_rate: o.mask_rate,
            mask_prob: o.split[0],
            random_prob: o.split[1],
            keep_prob: o.split[2],
            anchor_dropout_rate: o.anchor_dropout_rate,
            num_negatives: o.num_negatives,
            word_weight: 1.0,
            entity_weight: 1.0,
            relation_weight: 1.0,
            clip_norm: 1.0,
            checkpoint_interval: 0,
            workers: 1,
            d_model: 64,
            num_heads: 4,
            num_layers: 2,
            d_ff: 256,
            init_std: 0.02,
        }
    }
}

macro_rules! config_fields {
    ($m:ident) => {
        $m!(
            batch_size, lr, beta1, beta2, eps, weight_decay, epochs, max_steps, seed, max_neighbors, max_tokens,
            mask_rate, mask_prob, random_prob, keep_prob, anchor_dropout_rate, num_negatives, word_weight,
            entity_weight, relation_weight, clip_norm, checkpoint_interval, workers, d_model, num_heads, num_layers,
            d_ff, init_std
        )
    };
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        macro_rules! assign {
            ($($f:ident),*) => {
                match key {
                    $(stringify!($f) => {
                        self.$f = value
                            .parse()
                            .map_err(|_| TrainError::Config(format!("{key}: cannot parse `{value}`")))?;
                    })*
                    _ => return Err(TrainError::Config(format!("unknown key `{key}`"))),
                }
            };
        }
        config_fields!(assign);
        Ok(())
    }

    /// Starts from the defaults. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, TrainError> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| TrainError::Config(format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        macro_rules! emit {
            ($($f:ident),*) => { $( let _ = writeln!(out, "{} = {}", stringify!($f), self.$f); )* };
        }
        config_fields!(emit);
        out
    }

    pub fn adamw(&self) -> AdamW {
        AdamW { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps, weight_decay: self.weight_decay }
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            mask_rate: self.mask_rate,
            split: [self.mask_prob, self.random_prob, self.keep_prob],
            anchor_dropout_rate: self.anchor_dropout_rate,
            num_negatives: self.num_negatives,
            weights: [self.word_weight, self.entity_weight, self.relation_weight],
        }
    }

    pub fn builder(&self) -> BuilderConfig {
        BuilderConfig { max_neighbors: self.max_neighbors, max_tokens: self.max_tokens }
    }

    /// Encoder shape for the given vocabularies. Positions cover the longest
    /// sentence, one appended anchor and the two slots a triplet adds after it.
    pub fn model(&self, word_vocab: usize, num_relations: usize, num_entities: usize) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            num_heads: self.num_heads,
            num_layers: self.num_layers,
            d_ff: self.d_ff,
            max_pos: self.max_tokens + 4,
            word_vocab,
            num_relations,
            num_entities,
            init_std: self.init_std,
            ln_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 || self.max_tokens == 0 || self.workers == 0 {
            return bad("batch_size, max_tokens and workers must be positive");
        }
        if !(self.clip_norm > 0.0) || !(self.init_std > 0.0) {
            return bad("clip_norm and init_std must be positive");
        }
        self.adamw().validate().map_err(TrainError::Config)?;
        self.objective().validate().map_err(|e| TrainError::Config(e.to_string()))?;
        self.model(10, 1, 1).validate().map_err(TrainError::Config)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub total_loss: f64,
    pub word_loss: f64,
    pub entity_loss: f64,
    pub relation_loss: f64,
    pub grad_norm: f64,
}

pub const METRICS_HEADER: &str = "step,total_loss,word_loss,entity_loss,relation_loss,grad_norm";

impl StepMetrics {
    fn from_breakdown(step: u64, b: &LossBreakdown, grad_norm: f64) -> Self {
        Self {
            step,
            total_loss: b.total,
            word_loss: b.word(),
            entity_loss: b.entity(),
            relation_loss: b.relation(),
            grad_norm,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step, self.total_loss, self.word_loss, self.entity_loss, self.relation_loss, self.grad_norm
        )
    }
}

/// Model, entity table and optimizer, with the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParams<f32>,
    pub store: EmbeddingStore<f32>,
    pub opt: DenseAdamW<f32>,
    pub step: u64,
}

const MODEL_FILE: &str = "model.ckpt";
const STORE_FILE: &str = "entities.bin";
const OPTIM_FILE: &str = "optimizer.bin";

impl TrainState {
    pub fn init(model: ModelConfig, hyper: AdamW, seed: u64) -> Result<Self, TrainError> {
        model.validate().map_err(TrainError::Config)?;
        let mut rng = rng::derive(seed, Stream::Init, &[]);
        let params = ModelParams::init(model, &mut rng);
        let store = EmbeddingStore::new(model.entity_rows(), model.d_model, model.init_std, &mut rng);
        let opt = DenseAdamW::new(hyper, &params);
        Ok(Self { params, store, opt, step: 0 })
    }

    /// Writes `model.ckpt`, `entities.bin` and `optimizer.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut opt = self.step.to_le_bytes().to_vec();
        opt.extend_from_slice(&self.opt.to_bytes());
        for (name, bytes) in [
            (MODEL_FILE, checkpoint::to_bytes(&self.params)),
            (STORE_FILE, self.store.to_bytes()),
            (OPTIM_FILE, opt),
        ] {
            let tmp = dir.join(format!("{name}.tmp"));
            fs::write(&tmp, bytes)?;
            fs::rename(&tmp, dir.join(name))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, hyper: AdamW) -> Result<Self, TrainError> {
        let params = checkpoint::load::<f32>(&dir.join(MODEL_FILE))?;
        let store = EmbeddingStore::restore(&dir.join(STORE_FILE), Some(params.config.d_model))?;
        if store.len() != params.config.entity_rows() {
            return Err(CheckpointError::VersionMismatch(format!(
                "{} entity rows, model expects {}",
                store.len(),
                params.config.entity_rows()
            ))
            .into());
        }
        let bytes = fs::read(dir.join(OPTIM_FILE))?;
        let step_bytes = bytes.get(..8).ok_or(CheckpointError::Truncated)?;
        let step = u64::from_le_bytes(step_bytes.try_into().unwrap());
        let opt = DenseAdamW::from_bytes(hyper, &bytes[8..])?;
        if !opt.matches(&params) {
            return Err(CheckpointError::VersionMismatch("optimizer state does not fit the model".into()).into());
        }
        Ok(Self { params, store, opt, step })
    }
}

/// Loads only what evaluation needs from a checkpoint directory.
pub fn load_model(dir: &Path) -> Result<(ModelParams<f32>, EmbeddingStore<f32>), TrainError> {
    let params = checkpoint::load::<f32>(&dir.join(MODEL_FILE))?;
    let store = EmbeddingStore::restore(&dir.join(STORE_FILE), Some(params.config.d_model))?;
    if store.len() != params.config.entity_rows() {
        return Err(CheckpointError::VersionMismatch("entity table does not fit the model".into()).into());
    }
    Ok((params, store))
}

/// Fixed per-run pieces of a step.
pub struct StepContext {
    pub objective: ObjectiveConfig,
    pub vocabs: Vocabs,
    pub sampler: NegativeSampler,
    pub hyper: AdamW,
    pub clip_norm: f64,
    pub seed: u64,
}

impl StepContext {
    pub fn new(corpus: &Corpus, cfg: &TrainConfig, model: &ModelConfig) -> Result<Self, TrainError> {
        Ok(Self {
            objective: cfg.objective(),
            vocabs: Vocabs::of(model),
            sampler: NegativeSampler::new(&corpus.kg.negative_distribution())?,
            hyper: cfg.adamw(),
            clip_norm: cfg.clip_norm,
            seed: cfg.seed,
        })
    }
}

/// One forward/backward/update on `graphs`. Randomness (masking, dropout,
/// negatives) comes from the seed and the step number. On error nothing is
/// updated.
pub fn train_step(state: &mut TrainState, graphs: &[WkGraph], ctx: &StepContext) -> Result<StepMetrics, TrainError> {
    if graphs.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let step = state.step + 1;
    let mut rng = rng::derive(ctx.seed, Stream::Step, &[step]);
    let mut corrupted = Vec::with_capacity(graphs.len());
    let mut plans = Vec::with_capacity(graphs.len());
    for g in graphs {
        let (c, p) = prepare_sample(g, &ctx.objective, &ctx.vocabs, &mut rng)?;
        corrupted.push(c);
        plans.push(p);
    }
    let candidates = sample_candidates(&plans, &ctx.sampler, ctx.objective.num_negatives, &mut rng)?;

    let mut ids: Vec<u32> = corrupted
        .iter()
        .flat_map(|g| g.nodes().iter().filter(|n| n.kind == NodeKind::Entity).map(|n| n.token_id))
        .collect();
    ids.extend(candidates.iter().flatten().flatten().copied());
    let rows = state.store.gather(&ids)?;
    let pad_to = corrupted.iter().map(WkGraph::len).max().unwrap_or(0);
    let batch = to_batch::<f32>(&corrupted, pad_to)?;

    let params = &state.params;
    let objective = &ctx.objective;
    let result = compute_gradients(&batch, params, &rows, |hidden| {
        loss(hidden, &plans, &candidates, params, &rows, objective)
    });
    let (_, breakdown, mut grads) = match result {
        Ok(r) => r,
        Err(ObjectiveError::Encoder(EncoderError::NonFiniteLoss)) => return Err(TrainError::NonFiniteLoss { step }),
        Err(e) => return Err(e.into()),
    };
    let norm = grads.norm();
    if !norm.is_finite() {
        return Err(TrainError::NonFiniteLoss { step });
    }
    let clip = ctx.clip_norm as f32;
    if norm > clip {
        grads.scale(clip / norm);
    }
    state.opt.step(&mut state.params, &grads.params);
    state.store.apply_sparse_grads(rows.ids(), grads.entity.view(), &ctx.hyper)?;
    state.step = step;
    Ok(StepMetrics::from_breakdown(step, &breakdown, norm as f64))
}

#[derive(Debug)]
pub struct RunReport {
    pub state: TrainState,
    /// Metrics of the steps taken by this call.
    pub metrics: Vec<StepMetrics>,
    /// Sentences skipped per epoch because they link no entity.
    pub dropped_anchor_free: usize,
    pub batches_per_epoch: u64,
}

/// Optional files a run writes into its output directory.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub dir: Option<PathBuf>,
}

fn epoch_order(linked: &[usize], seed: u64, epoch: u64) -> Vec<usize> {
    let mut order = linked.to_vec();
    order.shuffle(&mut rng::derive(seed, Stream::Shuffle, &[epoch]));
    order
}

/// The graph of sentence `idx` as built for `epoch`.
pub fn training_graph(corpus: &Corpus, cfg: &TrainConfig, epoch: u64, idx: usize) -> Result<WkGraph, TrainError> {
    let s = corpus.sentences[idx].truncated(cfg.max_tokens);
    let mut rng = rng::derive(cfg.seed, Stream::Build, &[epoch, idx as u64]);
    Ok(build_graph(&s.tokens, &s.links, &corpus.kg, &cfg.builder(), &mut rng)?)
}

/// Calls `sink` with each graph of `order[skip..]`, in order. With more than
/// one worker, graphs are built on a thread pool feeding a bounded queue.
fn stream_graphs<F>(
    corpus: &Corpus,
    cfg: &TrainConfig,
    epoch: u64,
    order: &[usize],
    skip: usize,
    mut sink: F,
) -> Result<(), TrainError>
where
    F: FnMut(WkGraph) -> Result<bool, TrainError>,
{
    let todo = &order[skip.min(order.len())..];
    if cfg.workers <= 1 {
        for &idx in todo {
            if !sink(training_graph(corpus, cfg, epoch, idx)?)? {
                break;
            }
        }
        return Ok(());
    }
    let workers = cfg.workers;
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::sync_channel::<(usize, Result<WkGraph, TrainError>)>(workers * 4);
        let stop = std::sync::Arc::new(std::sync::atomic::AtomicBool::new(false));
        for w in 0..workers {
            let tx = tx.clone();
            let stop = stop.clone();
            scope.spawn(move || {
                for (k, &idx) in todo.iter().enumerate().skip(w).step_by(workers) {
                    if stop.load(std::sync::atomic::Ordering::Relaxed) {
                        break;
                    }
                    if tx.send((k, training_graph(corpus, cfg, epoch, idx))).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut next = 0;
        let mut outcome = Ok(());
        for (k, g) in rx.iter() {
            pending.insert(k, g);
            while let Some(g) = pending.remove(&next) {
                next += 1;
                let keep_going = g.and_then(&mut sink);
                match keep_going {
                    Ok(true) => {}
                    Ok(false) => {
                        stop.store(true, std::sync::atomic::Ordering::Relaxed);
                        return outcome;
                    }
                    Err(e) => {
                        stop.store(true, std::sync::atomic::Ordering::Relaxed);
                        outcome = Err(e);
                        return outcome;
                    }
                }
            }
        }
        outcome
    })
}

/// Trains on `corpus` from `resume` (or a fresh state) until `cfg.epochs`
/// are done or `cfg.max_steps` is reached. With an output directory, writes
/// `metrics.csv`, the config, periodic `checkpoint-<step>` directories and a
/// `final` one; on a non-finite loss the last good state goes to
/// `final.partial`.
pub fn run(
    corpus: &Corpus,
    cfg: &TrainConfig,
    out: &RunOutput,
    resume: Option<TrainState>,
) -> Result<RunReport, TrainError> {
    cfg.validate()?;
    let model = cfg.model(corpus.words.len(), corpus.kg.num_relations(), corpus.kg.num_entities());
    let mut state = match resume {
        Some(s) => {
            if s.params.config != model {
                return Err(CheckpointError::VersionMismatch("checkpoint does not fit this corpus and config".into())
                    .into());
            }
            s
        }
        None => TrainState::init(model, cfg.adamw(), cfg.seed)?,
    };
    let ctx = StepContext::new(corpus, cfg, &model)?;
    let linked: Vec<usize> = corpus.linked().map(|(i, _)| i).collect();
    let dropped = corpus.sentences.len() - linked.len();
    let per_epoch = linked.len().div_ceil(cfg.batch_size) as u64;
    let total = per_epoch * cfg.epochs as u64;
    let target = if cfg.max_steps > 0 { total.min(cfg.max_steps) } else { total };
    if linked.is_empty() {
        log::warn!("no sentence links an entity; nothing to train on");
    }

    let mut csv = match &out.dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("config.txt"), cfg.to_text())?;
            let path = dir.join("metrics.csv");
            let mut f = fs::OpenOptions::new().create(true).append(true).open(&path)?;
            if state.step == 0 || fs::metadata(&path)?.len() == 0 {
                f.set_len(0)?;
                writeln!(f, "{METRICS_HEADER}")?;
            }
            Some(io::BufWriter::new(f))
        }
        None => None,
    };

    let mut metrics = Vec::new();
    let start_epoch = state.step.checked_div(per_epoch).unwrap_or(0);
    let mut epoch = start_epoch;
    while state.step < target {
        let order = epoch_order(&linked, cfg.seed, epoch);
        let skip = ((state.step - epoch * per_epoch) as usize) * cfg.batch_size;
        let mut batch: Vec<WkGraph> = Vec::with_capacity(cfg.batch_size);
        let mut remaining = order.len() - skip;
        let mut failure = None;
        let result = stream_graphs(corpus, cfg, epoch, &order, skip, |g| {
            batch.push(g);
            remaining -= 1;
            if batch.len() < cfg.batch_size && remaining > 0 {
                return Ok(true);
            }
            let m = match train_step(&mut state, &batch, &ctx) {
                Ok(m) => m,
                Err(e) => {
                    failure = Some(state.step);
                    return Err(e);
                }
            };
            batch.clear();
            if let Some(w) = csv.as_mut() {
                writeln!(w, "{}", m.csv_row())?;
            }
            log::debug!("step {} loss {:.4}", m.step, m.total_loss);
            metrics.push(m);
            if let Some(dir) = &out.dir {
                if cfg.checkpoint_interval > 0 && state.step % cfg.checkpoint_interval == 0 {
                    if let Some(w) = csv.as_mut() {
                        w.flush()?;
                    }
                    state.save(&dir.join(format!("checkpoint-{}", state.step)))?;
                }
            }
            Ok(state.step < target)
        });
        if let Err(e) = result {
            if let Some(w) = csv.as_mut() {
                w.flush()?;
            }
            if let (Some(dir), Some(_)) = (&out.dir, failure) {
                state.save(&dir.join("final.partial"))?;
            }
            return Err(e);
        }
        epoch += 1;
    }
    if let Some(w) = csv.as_mut() {
        w.flush()?;
    }
    if let Some(dir) = &out.dir {
        state.save(&dir.join("final"))?;
    }
    Ok(RunReport { state, metrics, dropped_anchor_free: dropped, batches_per_epoch: per_epoch })
}

/// Loads the three input files and runs.
pub fn run_files(
    corpus: &Path,
    triples: &Path,
    aliases: &Path,
    cfg: &TrainConfig,
    out: &RunOutput,
) -> Result<RunReport, TrainError> {
    let corpus = Corpus::load(corpus, triples, aliases)?;
    run(&corpus, cfg, out, None)
}

pub fn write_metrics(path: &Path, metrics: &[StepMetrics]) -> io::Result<()> {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for m in metrics {
        s.push_str(&m.csv_row());
        s.push('\n');
    }
    fs::write(path, s)
}
