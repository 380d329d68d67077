//! Knowledge graph storage.
//!
//! [`TripletStore`] indexes `(head, relation, tail)` facts by head, keeps the
//! entity and relation vocabularies, and counts how often each entity occurs
//! on either side of a fact. [`AliasIndex`] maps tokenized surface forms to
//! entities for the mention linker.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use rand::seq::index;

use crate::graph::text::{tokenize, WordVocab, UNK};
use crate::rng::Rng;

#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {0}: expected tab-separated fields")]
    MalformedLine(usize),
    #[error("knowledge graph contains no triplets")]
    EmptyStore,
    #[error("unknown entity id {0}")]
    UnknownEntity(u32),
    #[error("line {line}: unknown entity `{name}`")]
    UnknownEntityName { name: String, line: usize },
    #[error("line {line}: unknown relation `{name}`")]
    UnknownRelationName { name: String, line: usize },
}

/// Names with dense ids assigned in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self::new();
        for n in names {
            v.intern(&n.into());
        }
        v
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// One name per line.
    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut s = String::new();
        for n in &self.names {
            s.push_str(n);
            s.push('\n');
        }
        fs::write(path, s)
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(Self::from_names(text.lines()))
    }
}

/// Head-indexed knowledge graph.
#[derive(Debug, Clone)]
pub struct TripletStore {
    entities: Vocab,
    relations: Vocab,
    by_head: Vec<Vec<(u32, u32)>>,
    entity_freq: Vec<u64>,
    num_triplets: usize,
}

impl TripletStore {
    /// Builds a store over existing vocabularies. Duplicate triplets are
    /// collapsed; frequencies count every occurrence in `triplets`,
    /// duplicates included.
    pub fn from_triplets<I>(entities: Vocab, relations: Vocab, triplets: I) -> Result<Self, KgError>
    where
        I: IntoIterator<Item = (u32, u32, u32)>,
    {
        let n = entities.len();
        let mut by_head = vec![Vec::new(); n];
        let mut entity_freq = vec![0u64; n];
        let mut seen = HashSet::new();
        let mut num_triplets = 0;
        for (h, r, t) in triplets {
            for e in [h, t] {
                if e as usize >= n {
                    return Err(KgError::UnknownEntity(e));
                }
            }
            assert!((r as usize) < relations.len(), "relation id {r} out of range");
            entity_freq[h as usize] += 1;
            entity_freq[t as usize] += 1;
            if seen.insert((h, r, t)) {
                by_head[h as usize].push((r, t));
                num_triplets += 1;
            }
        }
        if num_triplets == 0 {
            return Err(KgError::EmptyStore);
        }
        Ok(Self { entities, relations, by_head, entity_freq, num_triplets })
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_triplets(&self) -> usize {
        self.num_triplets
    }

    pub fn entity_freq(&self, e: u32) -> u64 {
        self.entity_freq.get(e as usize).copied().unwrap_or(0)
    }

    pub fn outgoing(&self, head: u32) -> Result<&[(u32, u32)], KgError> {
        self.by_head
            .get(head as usize)
            .map(Vec::as_slice)
            .ok_or(KgError::UnknownEntity(head))
    }

    pub fn contains(&self, h: u32, r: u32, t: u32) -> bool {
        self.by_head
            .get(h as usize)
            .is_some_and(|v| v.contains(&(r, t)))
    }

    /// All stored triplets, grouped by head in id order.
    pub fn triplets(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        self.by_head
            .iter()
            .enumerate()
            .flat_map(|(h, v)| v.iter().map(move |&(r, t)| (h as u32, r, t)))
    }

    /// Up to `max_k` outgoing `(relation, tail)` pairs of `head`, drawn
    /// uniformly without replacement and returned in storage order.
    pub fn neighbors(&self, head: u32, max_k: usize, rng: &mut Rng) -> Result<Vec<(u32, u32)>, KgError> {
        let out = self.outgoing(head)?;
        if max_k >= out.len() {
            return Ok(out.to_vec());
        }
        let mut picked = index::sample(rng, out.len(), max_k).into_vec();
        picked.sort_unstable();
        Ok(picked.into_iter().map(|i| out[i]).collect())
    }

    /// Negative-sampling distribution `p(e) ∝ freq(e)^0.75`.
    pub fn negative_distribution(&self) -> NegativeTable {
        NegativeTable::from_frequencies(&self.entity_freq)
    }
}

/// Probability of each entity id being drawn as a negative.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeTable {
    probs: Vec<f64>,
}

impl NegativeTable {
    /// Entities with zero frequency get probability zero.
    pub fn from_frequencies(freqs: &[u64]) -> Self {
        let weights: Vec<f64> = freqs.iter().map(|&f| (f as f64).powf(0.75)).collect();
        let z: f64 = weights.iter().sum();
        Self { probs: weights.into_iter().map(|w| w / z).collect() }
    }

    pub fn from_probs(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

pub fn parse_triples<R: BufRead>(reader: R) -> Result<TripletStore, KgError> {
    let mut entities = Vocab::new();
    let mut relations = Vocab::new();
    let mut raw = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
            return Err(KgError::MalformedLine(i + 1));
        }
        let h = entities.intern(fields[0].trim());
        let r = relations.intern(fields[1].trim());
        let t = entities.intern(fields[2].trim());
        raw.push((h, r, t));
    }
    TripletStore::from_triplets(entities, relations, raw)
}

pub fn load_triples(path: &Path) -> Result<TripletStore, KgError> {
    parse_triples(BufReader::new(fs::File::open(path)?))
}

/// Surface form → entity lookup over word-token sequences.
#[derive(Debug, Clone, Default)]
pub struct AliasIndex {
    surfaces: HashMap<Vec<u32>, u32>,
    max_surface_len: usize,
}

impl AliasIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// First insertion of a surface wins. Empty surfaces are ignored.
    pub fn insert(&mut self, surface: Vec<u32>, entity: u32) {
        if surface.is_empty() {
            return;
        }
        self.max_surface_len = self.max_surface_len.max(surface.len());
        self.surfaces.entry(surface).or_insert(entity);
    }

    pub fn get(&self, surface: &[u32]) -> Option<u32> {
        self.surfaces.get(surface).copied()
    }

    /// Every `(surface, entity)` pair, in no particular order.
    pub fn iter(&self) -> impl Iterator<Item = (&[u32], u32)> + '_ {
        self.surfaces.iter().map(|(s, &e)| (s.as_slice(), e))
    }

    pub fn max_surface_len(&self) -> usize {
        self.max_surface_len
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    /// Whether a surface can take part in linking; surfaces containing
    /// out-of-vocabulary tokens would otherwise match any unknown word.
    pub(crate) fn linkable(surface: &[u32]) -> bool {
        !surface.contains(&UNK)
    }
}

pub fn parse_aliases<R: BufRead>(reader: R, vocab: &WordVocab, entities: &Vocab) -> Result<AliasIndex, KgError> {
    let mut index = AliasIndex::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields[0].trim().is_empty() {
            return Err(KgError::MalformedLine(i + 1));
        }
        let name = fields[1].trim();
        let entity = entities
            .id(name)
            .ok_or_else(|| KgError::UnknownEntityName { name: name.to_string(), line: i + 1 })?;
        index.insert(tokenize(fields[0], vocab), entity);
    }
    Ok(index)
}

pub fn load_aliases(path: &Path, vocab: &WordVocab, entities: &Vocab) -> Result<AliasIndex, KgError> {
    parse_aliases(BufReader::new(fs::File::open(path)?), vocab, entities)
}
