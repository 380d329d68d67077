//! Entity embeddings kept outside the dense model, read and updated row by
//! row.
//!
//! Every row sits behind its own lock, so readers and writers of different
//! rows never wait on each other and a reader never sees a half-written row.
//! Each row carries its own AdamW moments and step count; rows are updated
//! at very different rates under sparse training.
//!
//! Snapshot layout (little-endian):
//!
//! ```text
//! magic "WKES" | version u32 | element width u8 | rows u64 | d u32
//! values, rows × d, in id order
//! per row: first moment × d, second moment × d, step u64, version u64
//! ```

use std::fs;
use std::io;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use parking_lot::RwLock;
use rand_distr::{Distribution, Normal};

use crate::encoder::checkpoint::ByteReader;
use crate::encoder::EntityRows;
use crate::optim::AdamW;
use crate::rng::Rng;
use crate::Real;

const MAGIC: [u8; 4] = *b"WKES";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown entity id {0}")]
    UnknownEntity(u32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient for entity {0}")]
    NonFiniteGradient(u32),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("snapshot mismatch: {0}")]
    VersionMismatch(String),
    #[error("snapshot truncated")]
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
struct Row<T> {
    value: Vec<T>,
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
    version: u64,
}

#[derive(Debug)]
pub struct EmbeddingStore<T> {
    d: usize,
    rows: Vec<RwLock<Row<T>>>,
}

impl<T: Real> EmbeddingStore<T> {
    /// Rows ~ Normal(0, std²).
    pub fn new(num_rows: usize, d: usize, std: f64, rng: &mut Rng) -> Self {
        let dist = Normal::new(0.0, std).expect("positive std");
        let values = (0..num_rows).map(|_| (0..d).map(|_| T::of(dist.sample(rng))).collect());
        Self::from_values(d, values)
    }

    pub fn from_array(table: &Array2<T>) -> Self {
        Self::from_values(table.ncols(), table.rows().into_iter().map(|r| r.to_vec()))
    }

    fn from_values<I: IntoIterator<Item = Vec<T>>>(d: usize, values: I) -> Self {
        let rows = values
            .into_iter()
            .map(|value| {
                RwLock::new(Row { value, m: vec![T::zero(); d], v: vec![T::zero(); d], step: 0, version: 0 })
            })
            .collect();
        Self { d, rows }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn row(&self, id: u32) -> Result<&RwLock<Row<T>>, StoreError> {
        self.rows.get(id as usize).ok_or(StoreError::UnknownEntity(id))
    }

    /// Copies of the requested rows and their versions. Duplicates are
    /// allowed and come back duplicated.
    pub fn read_rows(&self, ids: &[u32]) -> Result<(Array2<T>, Vec<u64>), StoreError> {
        let mut out = Array2::zeros((ids.len(), self.d));
        let mut versions = Vec::with_capacity(ids.len());
        for (i, &id) in ids.iter().enumerate() {
            let row = self.row(id)?.read();
            out.row_mut(i).as_slice_mut().unwrap().copy_from_slice(&row.value);
            versions.push(row.version);
        }
        Ok((out, versions))
    }

    /// Rows for a batch, keyed by entity id. `ids` are deduplicated in first
    /// occurrence order.
    pub fn gather(&self, ids: &[u32]) -> Result<EntityRows<T>, StoreError> {
        let mut seen = std::collections::HashSet::new();
        let unique: Vec<u32> = ids.iter().copied().filter(|id| seen.insert(*id)).collect();
        let (rows, _) = self.read_rows(&unique)?;
        Ok(EntityRows::new(unique, rows))
    }

    pub fn versions(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.read().version).collect()
    }

    pub fn steps(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.read().step).collect()
    }

    /// The whole table.
    pub fn to_array(&self) -> Array2<T> {
        let ids: Vec<u32> = (0..self.len() as u32).collect();
        self.read_rows(&ids).expect("ids in range").0
    }

    /// One AdamW step on each distinct row in `ids`. Gradients of repeated
    /// ids are summed first. Nothing is written unless every id and gradient
    /// checks out.
    pub fn apply_sparse_grads(&self, ids: &[u32], grads: ArrayView2<'_, T>, hyper: &AdamW) -> Result<(), StoreError> {
        if grads.dim() != (ids.len(), self.d) {
            return Err(StoreError::ShapeMismatch(format!(
                "{} ids with gradient {:?}, d = {}",
                ids.len(),
                grads.dim(),
                self.d
            )));
        }
        let mut order: Vec<u32> = Vec::new();
        let mut summed: std::collections::HashMap<u32, Vec<T>> = std::collections::HashMap::new();
        for (i, &id) in ids.iter().enumerate() {
            self.row(id)?;
            let g = grads.row(i);
            if g.iter().any(|x| !x.is_finite()) {
                return Err(StoreError::NonFiniteGradient(id));
            }
            match summed.get_mut(&id) {
                Some(acc) => acc.iter_mut().zip(g.iter()).for_each(|(a, &b)| *a += b),
                None => {
                    order.push(id);
                    summed.insert(id, g.to_vec());
                }
            }
        }
        for id in order {
            let g = &summed[&id];
            let mut row = self.rows[id as usize].write();
            let Row { value, m, v, step, version } = &mut *row;
            *step += 1;
            hyper.update(value, g, m, v, *step);
            *version += 1;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(T::BYTES);
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        let rows: Vec<Row<T>> = self.rows.iter().map(|r| r.read().clone()).collect();
        for row in &rows {
            row.value.iter().for_each(|x| x.write_le(&mut out));
        }
        for row in &rows {
            row.m.iter().for_each(|x| x.write_le(&mut out));
            row.v.iter().for_each(|x| x.write_le(&mut out));
            out.extend_from_slice(&row.step.to_le_bytes());
            out.extend_from_slice(&row.version.to_le_bytes());
        }
        out
    }

    /// `expect_d`, when given, must match the file.
    pub fn from_bytes(buf: &[u8], expect_d: Option<usize>) -> Result<Self, StoreError> {
        let mut r = ByteReader::new(buf);
        if r.take(4) != Some(&MAGIC[..]) {
            return Err(StoreError::VersionMismatch("not an embedding snapshot".into()));
        }
        let version = r.u32().ok_or(StoreError::Truncated)?;
        if version != VERSION {
            return Err(StoreError::VersionMismatch(format!("snapshot version {version}")));
        }
        let width = r.u8().ok_or(StoreError::Truncated)?;
        if width != T::BYTES {
            return Err(StoreError::VersionMismatch(format!("{width}-byte floats, expected {}", T::BYTES)));
        }
        let n = r.u64().ok_or(StoreError::Truncated)? as usize;
        let d = r.u32().ok_or(StoreError::Truncated)? as usize;
        if let Some(want) = expect_d {
            if want != d {
                return Err(StoreError::VersionMismatch(format!("snapshot d = {d}, model d = {want}")));
            }
        }
        let w = T::BYTES as usize;
        let vec = |r: &mut ByteReader<'_>| -> Result<Vec<T>, StoreError> {
            let bytes = r.take(d * w).ok_or(StoreError::Truncated)?;
            Ok(bytes.chunks_exact(w).map(T::read_le).collect())
        };
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(vec(&mut r)?);
        }
        let mut rows = Vec::with_capacity(n);
        for value in values {
            let m = vec(&mut r)?;
            let v = vec(&mut r)?;
            let step = r.u64().ok_or(StoreError::Truncated)?;
            let version = r.u64().ok_or(StoreError::Truncated)?;
            rows.push(RwLock::new(Row { value, m, v, step, version }));
        }
        if !r.at_end() {
            return Err(StoreError::VersionMismatch("trailing bytes".into()));
        }
        Ok(Self { d, rows })
    }

    pub fn snapshot(&self, path: &Path) -> Result<(), StoreError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn restore(path: &Path, expect_d: Option<usize>) -> Result<Self, StoreError> {
        Self::from_bytes(&fs::read(path)?, expect_d)
    }
}

impl<T: Real> Clone for EmbeddingStore<T> {
    fn clone(&self) -> Self {
        Self { d: self.d, rows: self.rows.iter().map(|r| RwLock::new(r.read().clone())).collect() }
    }
}

impl<T: Real> PartialEq for EmbeddingStore<T> {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| *a.read() == *b.read())
    }
}
