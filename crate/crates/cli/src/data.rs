//! Locating and loading inputs, with errors mapped to exit codes.

use std::fmt::Display;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use wklm::corpus::{self, Corpus};
use wklm::encoder::checkpoint::{self, CheckpointError};
use wklm::encoder::ModelParams;
use wklm::graph::text::WordVocab;
use wklm::kg::{self, AliasIndex, KgError, TripletStore};
use wklm::param_store::{EmbeddingStore, StoreError};

use crate::{DataArgs, Failure, ModelArgs, DATA_DIR_ENV};

pub fn usage(what: impl Display) -> Failure {
    Failure::Usage(what.to_string())
}

fn in_file(path: &Path, e: impl Display) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

pub struct InputPaths {
    pub corpus: PathBuf,
    pub triples: PathBuf,
    pub aliases: PathBuf,
}

impl DataArgs {
    pub fn paths(&self) -> Result<InputPaths, Failure> {
        let dir = self.data_dir.clone().or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from));
        let pick = |given: &Option<PathBuf>, file: &str, flag: &str| -> Result<PathBuf, Failure> {
            match (given, &dir) {
                (Some(p), _) => Ok(p.clone()),
                (None, Some(d)) => Ok(d.join(file)),
                (None, None) => Err(usage(format!("missing --{flag} (or --data-dir / {DATA_DIR_ENV})"))),
            }
        };
        let paths = InputPaths {
            corpus: pick(&self.corpus, "corpus.txt", "corpus")?,
            triples: pick(&self.triples, "triples.tsv", "triples")?,
            aliases: pick(&self.aliases, "aliases.tsv", "aliases")?,
        };
        for p in [&paths.corpus, &paths.triples, &paths.aliases] {
            if !p.is_file() {
                return Err(usage(format!("{}: no such file", p.display())));
            }
        }
        Ok(paths)
    }
}

pub fn read_lines(path: &Path) -> Result<Vec<String>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| in_file(path, e))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
}

/// Loads the corpus; ingestion errors name the file and line.
pub fn load_corpus(data: &DataArgs) -> Result<Corpus, Failure> {
    let p = data.paths()?;
    let kg = kg::load_triples(&p.triples).map_err(|e| in_file(&p.triples, e))?;
    let pairs = corpus::read_alias_pairs(&p.aliases).map_err(|e| in_file(&p.aliases, e))?;
    let sentences = read_lines(&p.corpus)?;
    Corpus::from_parts(&sentences, kg, &pairs).map_err(|e| in_file(&p.aliases, e))
}

/// A trained model with the vocabularies it was trained on.
pub struct LoadedModel {
    pub params: ModelParams<f32>,
    pub store: EmbeddingStore<f32>,
    pub words: WordVocab,
    pub kg: TripletStore,
    pub aliases: AliasIndex,
}

fn checkpoint_failure(path: &Path, e: CheckpointError) -> Failure {
    match e {
        CheckpointError::Io(io) => in_file(path, io),
        other => Failure::Mismatch(format!("{}: {other}", path.display())),
    }
}

fn store_failure(path: &Path, e: StoreError) -> Failure {
    match e {
        StoreError::Io(io) => in_file(path, io),
        other => Failure::Mismatch(format!("{}: {other}", path.display())),
    }
}

impl ModelArgs {
    pub fn load(&self) -> Result<LoadedModel, Failure> {
        let (dir, model_file) = if self.model.is_dir() {
            (self.model.clone(), self.model.join("model.ckpt"))
        } else {
            (self.model.parent().map(Path::to_path_buf).unwrap_or_default(), self.model.clone())
        };
        if !model_file.is_file() {
            return Err(usage(format!("{}: no such file", model_file.display())));
        }
        let store_file = self.store.clone().unwrap_or_else(|| dir.join("entities.bin"));
        let vocab_dir = match &self.vocab {
            Some(v) => v.clone(),
            None => [Some(dir.as_path()), dir.parent()]
                .into_iter()
                .flatten()
                .find(|d| d.join("words.txt").is_file())
                .map(Path::to_path_buf)
                .ok_or_else(|| usage(format!("no words.txt in {} or its parent; pass --vocab", dir.display())))?,
        };

        let params = checkpoint::load::<f32>(&model_file).map_err(|e| checkpoint_failure(&model_file, e))?;
        let store = EmbeddingStore::<f32>::restore(&store_file, None).map_err(|e| store_failure(&store_file, e))?;
        let (words, kg, aliases) = corpus::read_vocab(&vocab_dir).map_err(|e| match e {
            KgError::Io(io) if io.kind() == io::ErrorKind::InvalidData => Failure::Mismatch(format!("{}: {io}", vocab_dir.display())),
            other => in_file(&vocab_dir, other),
        })?;

        let c = &params.config;
        let mut problems = Vec::new();
        if store.dim() != c.d_model {
            problems.push(format!("entity table width {} but model width {}", store.dim(), c.d_model));
        }
        if store.len() != c.entity_rows() {
            problems.push(format!("entity table has {} rows but model expects {}", store.len(), c.entity_rows()));
        }
        if words.len() != c.word_vocab {
            problems.push(format!("{} words in vocabulary but model has {}", words.len(), c.word_vocab));
        }
        if kg.num_entities() != c.num_entities {
            problems.push(format!("{} entities in vocabulary but model has {}", kg.num_entities(), c.num_entities));
        }
        if kg.num_relations() != c.num_relations {
            problems.push(format!("{} relations in vocabulary but model has {}", kg.num_relations(), c.num_relations));
        }
        if !problems.is_empty() {
            return Err(Failure::Mismatch(problems.join("; ")));
        }
        Ok(LoadedModel { params, store, words, kg, aliases })
    }
}
