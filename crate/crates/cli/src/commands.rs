use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use wklm::corpus::{write_vocab, Corpus};
use wklm::encoder::checkpoint::CheckpointError;
use wklm::eval::{
    format_queries, load_queries, make_completion_splits, write_results, ClozeProbe, CompletionQuery, EvalConfig,
    EvalError, Evaluator, Head, SplitConfig,
};
use wklm::graph::codec;
use wklm::graph::text::detokenize;
use wklm::graph::{build_graph, link_mentions, NodeKind, WkGraph};
use wklm::rng::{self, Stream};
use wklm::synthetic::{generate, SyntheticConfig};
use wklm::trainer::{run, training_graph, RunOutput, TrainConfig, TrainError, TrainState};

use crate::data::{load_corpus, read_lines, usage, LoadedModel};
use crate::{BuildArgs, EvalArgs, Failure, InspectArgs, PretrainArgs, ProbeArgs, SplitArgs, SynthArgs};

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    usage(format!("{}: {e}", path.display()))
}

/// Builds graphs for the given sentences on `workers` threads; graph `k`
/// depends only on the seed, epoch and sentence index.
fn build_all(corpus: &Corpus, cfg: &TrainConfig, epoch: u64, idx: &[usize], workers: usize) -> Result<Vec<WkGraph>, TrainError> {
    let workers = workers.max(1).min(idx.len().max(1));
    let mut slots: Vec<Option<Result<WkGraph, TrainError>>> = (0..idx.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<_> = slots.chunks_mut(idx.len().div_ceil(workers).max(1)).zip(idx.chunks(idx.len().div_ceil(workers).max(1))).collect();
        for (out, ids) in chunks {
            s.spawn(move || {
                for (o, &i) in out.iter_mut().zip(ids) {
                    *o = Some(training_graph(corpus, cfg, epoch, i));
                }
            });
        }
    });
    slots.into_iter().map(|g| g.expect("every slot filled")).collect()
}

pub fn build_graphs(a: &BuildArgs) -> Result<(), Failure> {
    let corpus = load_corpus(&a.data)?;
    let cfg = TrainConfig {
        seed: a.seed,
        max_neighbors: a.max_neighbors,
        max_tokens: a.max_tokens,
        ..TrainConfig::default()
    };
    let linked: Vec<usize> = corpus.linked().map(|(i, _)| i).collect();
    let graphs = build_all(&corpus, &cfg, a.epoch, &linked, a.workers).map_err(usage)?;
    let mut kinds = [0usize; 3];
    for g in &graphs {
        for n in g.nodes() {
            kinds[n.kind.index()] += 1;
        }
    }
    let mut stats = String::new();
    writeln!(stats, "sentences {}", corpus.sentences.len()).unwrap();
    writeln!(stats, "graphs {}", graphs.len()).unwrap();
    writeln!(stats, "dropped_anchor_free {}", corpus.sentences.len() - graphs.len()).unwrap();
    writeln!(stats, "nodes_word {}", kinds[NodeKind::Word.index()]).unwrap();
    writeln!(stats, "nodes_entity {}", kinds[NodeKind::Entity.index()]).unwrap();
    writeln!(stats, "nodes_relation {}", kinds[NodeKind::Relation.index()]).unwrap();

    fs::create_dir_all(&a.out).map_err(|e| io_failure(&a.out, e))?;
    codec::write_shard(&a.out.join("graphs.wkg"), &graphs).map_err(|e| io_failure(&a.out, e))?;
    fs::write(a.out.join("stats.txt"), &stats).map_err(|e| io_failure(&a.out, e))?;
    write_vocab(&a.out, &corpus.words, &corpus.kg, &corpus.aliases).map_err(|e| io_failure(&a.out, e))?;
    print!("{stats}");
    Ok(())
}

fn train_failure(e: TrainError, out: &Path) -> Failure {
    match e {
        TrainError::NonFiniteLoss { step } => Failure::Numeric(format!(
            "non-finite loss at step {step}; last good state kept in {}",
            out.join("final.partial").display()
        )),
        TrainError::Checkpoint(CheckpointError::Io(io)) => usage(io),
        TrainError::Checkpoint(c) => Failure::Mismatch(c.to_string()),
        TrainError::Store(s) => Failure::Mismatch(s.to_string()),
        other => usage(other),
    }
}

pub fn pretrain(a: &PretrainArgs) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_failure(p, e))?;
            TrainConfig::parse(&text).map_err(|e| io_failure(p, e))?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(m) = a.max_steps {
        cfg.max_steps = m;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.validate().map_err(usage)?;
    let corpus = load_corpus(&a.data)?;
    let resume = match &a.resume {
        Some(dir) => Some(TrainState::load(dir, cfg.adamw()).map_err(|e| train_failure(e, &a.out_dir))?),
        None => None,
    };
    write_vocab(&a.out_dir, &corpus.words, &corpus.kg, &corpus.aliases).map_err(|e| io_failure(&a.out_dir, e))?;
    let report = run(&corpus, &cfg, &RunOutput { dir: Some(a.out_dir.clone()) }, resume)
        .map_err(|e| train_failure(e, &a.out_dir))?;
    println!(
        "trained to step {} ({} steps this run; {} sentences without entities skipped)",
        report.state.step,
        report.metrics.len(),
        report.dropped_anchor_free
    );
    if let Some(m) = report.metrics.last() {
        println!(
            "final loss {:.4} (word {:.4}, entity {:.4}, relation {:.4})",
            m.total_loss, m.word_loss, m.entity_loss, m.relation_loss
        );
    }
    println!("checkpoint {}", a.out_dir.join("final").display());
    Ok(())
}

fn eval_failure(e: EvalError, what: &Path) -> Failure {
    match e {
        EvalError::Encoder(x) => Failure::Mismatch(x.to_string()),
        EvalError::Store(x) => Failure::Mismatch(x.to_string()),
        other => io_failure(what, other),
    }
}

pub fn eval_completion(a: &EvalArgs) -> Result<(), Failure> {
    let LoadedModel { params, store, words, kg, aliases } = a.model.load()?;
    let queries = load_queries(&a.queries, &words, &kg, &aliases).map_err(|e| eval_failure(e, &a.queries))?;
    let ev = Evaluator {
        params: &params,
        store: &store,
        kg: &kg,
        cfg: EvalConfig { max_neighbors: a.max_neighbors, max_tokens: a.max_tokens, seed: a.seed },
    };
    let result = ev.evaluate(&queries).map_err(|e| eval_failure(e, &a.queries))?;
    write_results(&a.out, &queries, &result).map_err(|e| io_failure(&a.out, e))?;
    println!("{}", result.summary_line());
    Ok(())
}

pub fn probe(a: &ProbeArgs) -> Result<(), Failure> {
    let LoadedModel { params, store, words, kg, aliases } = a.model.load()?;
    let mut probes = Vec::new();
    for (i, line) in read_lines(&a.probes)?.iter().enumerate() {
        let (text, answer) = line
            .split_once('\t')
            .ok_or_else(|| io_failure(&a.probes, format!("line {}: expected sentence<TAB>answer", i + 1)))?;
        let gold = words
            .id(&answer.trim().to_lowercase())
            .ok_or_else(|| io_failure(&a.probes, format!("line {}: answer `{}` is not in the vocabulary", i + 1, answer.trim())))?;
        probes.push(ClozeProbe::new(text, gold, &words, &aliases));
    }
    let ev = Evaluator {
        params: &params,
        store: &store,
        kg: &kg,
        cfg: EvalConfig { max_neighbors: a.max_neighbors, seed: a.seed, ..EvalConfig::default() },
    };
    let p1 = ev.cloze_p_at_1(&probes).map_err(|e| eval_failure(e, &a.probes))?;
    println!("P@1 {p1:.4} over {} probes", probes.len());
    Ok(())
}

fn describe(g: &WkGraph, corpus: &Corpus) -> String {
    let mut out = String::new();
    let count = |k: NodeKind| g.nodes().iter().filter(|n| n.kind == k).count();
    writeln!(
        out,
        "nodes {} (words {}, entities {}, relations {})",
        g.len(),
        count(NodeKind::Word),
        count(NodeKind::Entity),
        count(NodeKind::Relation)
    )
    .unwrap();
    let mask = |v: usize, id: u32| if id as usize == v { Some("[MASK]") } else { None };
    for (i, n) in g.nodes().iter().enumerate() {
        let (kind, name) = match n.kind {
            NodeKind::Word => ("word", corpus.words.word(n.token_id).unwrap_or("?")),
            NodeKind::Entity => (
                "entity",
                mask(corpus.kg.num_entities(), n.token_id).or(corpus.kg.entities().name(n.token_id)).unwrap_or("?"),
            ),
            NodeKind::Relation => (
                "relation",
                mask(corpus.kg.num_relations(), n.token_id).or(corpus.kg.relations().name(n.token_id)).unwrap_or("?"),
            ),
        };
        let neighbours: Vec<String> = g.neighbors(i).filter(|&j| j != i).map(|j| j.to_string()).collect();
        writeln!(
            out,
            "{i:>4} {kind:<8} {name:<24} pos {:<3}{} -> {}",
            n.position,
            if n.anchor { " anchor" } else { "" },
            neighbours.join(" ")
        )
        .unwrap();
    }
    out
}

pub fn inspect_graph(a: &InspectArgs) -> Result<(), Failure> {
    let corpus = load_corpus(&a.data)?;
    let cfg = TrainConfig { seed: a.seed, max_neighbors: a.max_neighbors, ..TrainConfig::default() };
    let (tokens, g) = match (a.sentence, &a.text) {
        (Some(i), _) => {
            let s = corpus
                .sentences
                .get(i)
                .ok_or_else(|| usage(format!("sentence {i} out of range ({} sentences)", corpus.sentences.len())))?;
            (s.tokens.clone(), training_graph(&corpus, &cfg, a.epoch, i).map_err(usage)?)
        }
        (None, Some(text)) => {
            let tokens = wklm::graph::text::tokenize(text, &corpus.words);
            let links = link_mentions(&tokens, &corpus.aliases);
            let mut rng = rng::derive(a.seed, Stream::Build, &[a.epoch, u64::MAX]);
            let g = build_graph(&tokens, &links, &corpus.kg, &cfg.builder(), &mut rng).map_err(usage)?;
            (tokens, g)
        }
        (None, None) => return Err(usage("pass --sentence or --text")),
    };
    println!("tokens: {}", detokenize(&tokens, &corpus.words));
    print!("{}", describe(&g, &corpus));
    if g.is_anchor_free() {
        println!("anchor-free: skipped during training");
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<(), Failure> {
    let data = generate(&SyntheticConfig::default(), a.seed);
    data.write(&a.out).map_err(|e| io_failure(&a.out, e))?;
    println!(
        "{} entities, {} facts, {} sentences written to {}",
        data.entities.len(),
        data.triplets.len(),
        data.sentences.len(),
        a.out.display()
    );
    Ok(())
}

/// Inductive heads are written by their words in the sentence, since the
/// training vocabulary will not know their names.
fn as_unseen(mut q: CompletionQuery) -> CompletionQuery {
    if let Head::Known(h) = q.head {
        if let Some(l) = q.links.iter().find(|l| l.entity == h) {
            q.head = Head::Unseen { surface: q.tokens[l.start..l.end].to_vec() };
        }
    }
    q
}

pub fn split(a: &SplitArgs) -> Result<(), Failure> {
    let corpus = load_corpus(&a.data)?;
    let cfg = SplitConfig {
        transductive_facts: a.transductive_facts,
        inductive_entities: a.inductive_entities,
        ..SplitConfig::default()
    };
    let mut rng = rng::derive(a.seed, Stream::Split, &[]);
    let splits =
        make_completion_splits(&corpus.kg, &corpus.sentences, &cfg, &mut rng).map_err(|e| usage(e.to_string()))?;
    let train = a.out.join("train");
    fs::create_dir_all(&train).map_err(|e| io_failure(&train, e))?;
    let kg = &splits.train_kg;
    let name = |e: u32| kg.entities().name(e).unwrap_or("?");
    let mut text = String::new();
    for &i in &splits.train_sentences {
        text.push_str(&detokenize(&corpus.sentences[i].tokens, &corpus.words));
        text.push('\n');
    }
    let mut triples = String::new();
    for (h, r, t) in kg.triplets() {
        writeln!(triples, "{}\t{}\t{}", name(h), kg.relations().name(r).unwrap_or("?"), name(t)).unwrap();
    }
    // Only entities that keep a fact survive into the training vocabulary.
    let mut aliases: Vec<(u32, String)> = corpus
        .aliases
        .iter()
        .filter(|&(_, e)| kg.entity_freq(e) > 0)
        .map(|(s, e)| (e, detokenize(s, &corpus.words)))
        .collect();
    aliases.sort();
    let aliases: String = aliases.iter().map(|(e, s)| format!("{s}\t{}\n", name(*e))).collect();
    let inductive: Vec<CompletionQuery> = splits.inductive.iter().cloned().map(as_unseen).collect();
    let outputs = [
        (train.join("corpus.txt"), text),
        (train.join("triples.tsv"), triples),
        (train.join("aliases.tsv"), aliases),
        (a.out.join("transductive.tsv"), format_queries(&splits.transductive, &corpus.words, &corpus.kg)),
        (a.out.join("inductive.tsv"), format_queries(&inductive, &corpus.words, &corpus.kg)),
    ];
    for (path, body) in outputs {
        fs::write(&path, body).map_err(|e| io_failure(&path, e))?;
    }
    println!(
        "{} training sentences, {} facts; {} transductive and {} inductive queries ({} held-out entities)",
        splits.train_sentences.len(),
        kg.num_triplets(),
        splits.transductive.len(),
        splits.inductive.len(),
        splits.unseen.len()
    );
    Ok(())
}
