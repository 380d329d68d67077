//! Linked training text: word vocabulary, knowledge graph, alias table and
//! the tokenized sentences with their mention links.

use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use crate::encoder::ModelConfig;
use crate::graph::text::{detokenize, tokenize, WordVocab};
use crate::graph::{link_mentions, Link};
use crate::kg::{self, AliasIndex, KgError, TripletStore, Vocab};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<u32>,
    pub links: Vec<Link>,
}

impl Sentence {
    pub fn linked_entities(&self) -> impl Iterator<Item = u32> + '_ {
        self.links.iter().map(|l| l.entity)
    }

    pub fn has_links(&self) -> bool {
        !self.links.is_empty()
    }

    /// The first `max` tokens and the links wholly inside them.
    pub fn truncated(&self, max: usize) -> Sentence {
        if self.tokens.len() <= max {
            return self.clone();
        }
        Sentence {
            tokens: self.tokens[..max].to_vec(),
            links: self.links.iter().copied().filter(|l| l.end <= max).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub words: WordVocab,
    pub kg: TripletStore,
    pub aliases: AliasIndex,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    /// The vocabulary covers both the sentences and every alias surface, so
    /// all entity names are linkable. Aliases are `(surface, entity name)`.
    pub fn from_parts<S: AsRef<str>>(
        sentences: &[S],
        kg: TripletStore,
        aliases: &[(String, String)],
    ) -> Result<Self, KgError> {
        let mut words = WordVocab::from_texts(sentences.iter().map(AsRef::as_ref));
        for (surface, _) in aliases {
            words.extend_with(surface);
        }
        let mut index = AliasIndex::new();
        for (i, (surface, name)) in aliases.iter().enumerate() {
            let e = kg
                .entities()
                .id(name)
                .ok_or_else(|| KgError::UnknownEntityName { name: name.clone(), line: i + 1 })?;
            index.insert(tokenize(surface, &words), e);
        }
        let sentences = sentences
            .iter()
            .map(|s| {
                let tokens = tokenize(s.as_ref(), &words);
                let links = link_mentions(&tokens, &index);
                Sentence { tokens, links }
            })
            .collect();
        Ok(Self { words, kg, aliases: index, sentences })
    }

    /// Corpus: one sentence per line. Triples: `head<TAB>relation<TAB>tail`.
    /// Aliases: `surface<TAB>entity`.
    pub fn load(corpus: &Path, triples: &Path, aliases: &Path) -> Result<Self, KgError> {
        let kg = kg::load_triples(triples)?;
        let sentences: Vec<String> = BufReader::new(fs::File::open(corpus)?)
            .lines()
            .collect::<io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|l| !l.trim().is_empty())
            .collect();
        let pairs = read_alias_pairs(aliases)?;
        Self::from_parts(&sentences, kg, &pairs)
    }

    /// Same vocabularies and links, different sentences and knowledge graph.
    pub fn restricted(&self, kg: TripletStore, keep: &[usize]) -> Self {
        Self {
            words: self.words.clone(),
            kg,
            aliases: self.aliases.clone(),
            sentences: keep.iter().map(|&i| self.sentences[i].clone()).collect(),
        }
    }

    /// The small encoder sized for this corpus.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::small(self.words.len(), self.kg.num_relations(), self.kg.num_entities())
    }

    pub fn linked(&self) -> impl Iterator<Item = (usize, &Sentence)> + '_ {
        self.sentences.iter().enumerate().filter(|(_, s)| s.has_links())
    }
}

const WORDS: &str = "words.txt";
const ENTITIES: &str = "entities.txt";
const RELATIONS: &str = "relations.txt";
const TRIPLES: &str = "triples.tsv";
const ALIASES: &str = "aliases.tsv";

/// Writes the id assignments and knowledge graph a model was trained with:
/// `words.txt`, `entities.txt`, `relations.txt` (one name per line, line
/// number = id), `triples.tsv` and `aliases.tsv`.
pub fn write_vocab(dir: &Path, words: &WordVocab, kg: &TripletStore, aliases: &AliasIndex) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    words.write(&dir.join(WORDS))?;
    kg.entities().write(&dir.join(ENTITIES))?;
    kg.relations().write(&dir.join(RELATIONS))?;
    let name = |v: &Vocab, id: u32| v.name(id).unwrap_or("?").to_string();
    let mut triples = String::new();
    for (h, r, t) in kg.triplets() {
        triples.push_str(&format!("{}\t{}\t{}\n", name(kg.entities(), h), name(kg.relations(), r), name(kg.entities(), t)));
    }
    fs::write(dir.join(TRIPLES), triples)?;
    let mut pairs: Vec<(u32, String)> = aliases.iter().map(|(s, e)| (e, detokenize(s, words))).collect();
    pairs.sort();
    let text: String = pairs.iter().map(|(e, s)| format!("{s}\t{}\n", name(kg.entities(), *e))).collect();
    fs::write(dir.join(ALIASES), text)
}

/// Reads what [`write_vocab`] wrote, keeping every id.
pub fn read_vocab(dir: &Path) -> Result<(WordVocab, TripletStore, AliasIndex), KgError> {
    let words = WordVocab::read(&dir.join(WORDS))?;
    let entities = Vocab::read(&dir.join(ENTITIES))?;
    let relations = Vocab::read(&dir.join(RELATIONS))?;
    let mut triplets = Vec::new();
    for (i, line) in fs::read_to_string(dir.join(TRIPLES))?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if f.len() != 3 {
            return Err(KgError::MalformedLine(i + 1));
        }
        let entity = |n: &str| entities.id(n).ok_or_else(|| KgError::UnknownEntityName { name: n.into(), line: i + 1 });
        let r = relations
            .id(f[1])
            .ok_or_else(|| KgError::UnknownRelationName { name: f[1].into(), line: i + 1 })?;
        triplets.push((entity(f[0])?, r, entity(f[2])?));
    }
    let kg = TripletStore::from_triplets(entities, relations, triplets)?;
    let aliases = kg::load_aliases(&dir.join(ALIASES), &words, kg.entities())?;
    Ok((words, kg, aliases))
}

pub fn read_alias_pairs(path: &Path) -> Result<Vec<(String, String)>, KgError> {
    parse_alias_pairs(BufReader::new(fs::File::open(path)?))
}

pub fn parse_alias_pairs<R: BufRead>(reader: R) -> Result<Vec<(String, String)>, KgError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields.iter().any(|f| f.trim().is_empty()) {
            return Err(KgError::MalformedLine(i + 1));
        }
        out.push((fields[0].trim().to_string(), fields[1].trim().to_string()));
    }
    Ok(out)
}
