//! Model checkpoint files.
//!
//! ```text
//! magic "WKLM" | version u32 | element width u8 (4 or 8)
//! d u32 | d_k u32 | heads u32 | layers u32 | d_ff u32 | max_pos u32
//! word vocab u32 | relations u32 | entities u32 | ln_eps f64 | init_std f64
//! tensor count u32
//! per tensor: rank u8, dims u32 × rank, values little-endian
//! ```
//!
//! All integers little-endian. Training writes 32-bit floats.

use std::fs;
use std::io;
use std::path::Path;

use super::{ModelConfig, ModelParams};
use crate::Real;

const MAGIC: [u8; 4] = *b"WKLM";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a model checkpoint")]
    BadMagic,
    #[error("checkpoint mismatch: {0}")]
    VersionMismatch(String),
    #[error("checkpoint truncated")]
    Truncated,
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    pub(crate) fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    pub(crate) fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn to_bytes<T: Real>(params: &ModelParams<T>) -> Vec<u8> {
    let c = &params.config;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::BYTES);
    for v in [
        c.d_model,
        c.d_head(),
        c.num_heads,
        c.num_layers,
        c.d_ff,
        c.max_pos,
        c.word_vocab,
        c.num_relations,
        c.num_entities,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.ln_eps.to_le_bytes());
    out.extend_from_slice(&c.init_std.to_le_bytes());
    let tensors = params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.push(t.shape.len() as u8);
        for &dim in &t.shape {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &x in t.data {
            x.write_le(&mut out);
        }
    }
    out
}

/// Reads only the header.
pub fn read_config(buf: &[u8]) -> Result<(ModelConfig, u8), CheckpointError> {
    let mut r = ByteReader::new(buf);
    let cfg = header(&mut r)?;
    Ok(cfg)
}

fn header(r: &mut ByteReader<'_>) -> Result<(ModelConfig, u8), CheckpointError> {
    if r.take(4) != Some(&MAGIC[..]) {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32().ok_or(CheckpointError::Truncated)?;
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch(format!("file version {version}, expected {VERSION}")));
    }
    let width = r.u8().ok_or(CheckpointError::Truncated)?;
    let mut dims = [0usize; 9];
    for d in &mut dims {
        *d = r.u32().ok_or(CheckpointError::Truncated)? as usize;
    }
    let ln_eps = r.f64().ok_or(CheckpointError::Truncated)?;
    let init_std = r.f64().ok_or(CheckpointError::Truncated)?;
    let [d_model, d_head, num_heads, num_layers, d_ff, max_pos, word_vocab, num_relations, num_entities] = dims;
    let config = ModelConfig {
        d_model,
        num_heads,
        num_layers,
        d_ff,
        max_pos,
        word_vocab,
        num_relations,
        num_entities,
        init_std,
        ln_eps,
    };
    config.validate().map_err(CheckpointError::VersionMismatch)?;
    if config.d_head() != d_head {
        return Err(CheckpointError::VersionMismatch(format!("d_k {d_head} inconsistent with d / heads")));
    }
    Ok((config, width))
}

pub fn from_bytes<T: Real>(buf: &[u8]) -> Result<ModelParams<T>, CheckpointError> {
    let mut r = ByteReader::new(buf);
    let (config, width) = header(&mut r)?;
    if width != T::BYTES {
        return Err(CheckpointError::VersionMismatch(format!(
            "{width}-byte floats in file, {}-byte expected",
            T::BYTES
        )));
    }
    let mut params = ModelParams::<T>::zeros(config);
    let count = r.u32().ok_or(CheckpointError::Truncated)? as usize;
    let mut tensors = params.tensors_mut();
    if count != tensors.len() {
        return Err(CheckpointError::VersionMismatch(format!("{count} tensors, expected {}", tensors.len())));
    }
    for t in tensors.iter_mut() {
        let rank = r.u8().ok_or(CheckpointError::Truncated)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32().ok_or(CheckpointError::Truncated)? as usize);
        }
        if shape != t.shape {
            return Err(CheckpointError::VersionMismatch(format!(
                "{}: shape {shape:?}, expected {:?}",
                t.name, t.shape
            )));
        }
        let bytes = r.take(t.data.len() * T::BYTES as usize).ok_or(CheckpointError::Truncated)?;
        for (x, chunk) in t.data.iter_mut().zip(bytes.chunks_exact(T::BYTES as usize)) {
            *x = T::read_le(chunk);
        }
    }
    drop(tensors);
    if !r.at_end() {
        return Err(CheckpointError::VersionMismatch("trailing bytes".into()));
    }
    Ok(params)
}

pub fn save<T: Real>(params: &ModelParams<T>, path: &Path) -> io::Result<()> {
    fs::write(path, to_bytes(params))
}

pub fn load<T: Real>(path: &Path) -> Result<ModelParams<T>, CheckpointError> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn cfg() -> ModelConfig {
        ModelConfig {
            d_model: 8,
            num_heads: 2,
            num_layers: 2,
            d_ff: 12,
            max_pos: 7,
            word_vocab: 9,
            num_relations: 3,
            num_entities: 4,
            init_std: 0.1,
            ln_eps: 1e-5,
        }
    }

    #[test]
    fn round_trip_bit_exact() {
        let p = ModelParams::<f32>::init(cfg(), &mut rng::seeded(3));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&p, &path).unwrap();
        let q = load::<f32>(&path).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn header_layout() {
        let p = ModelParams::<f32>::init(cfg(), &mut rng::seeded(3));
        let b = to_bytes(&p);
        assert_eq!(&b[..4], b"WKLM");
        assert_eq!(b[8], 4);
        assert_eq!(u32::from_le_bytes(b[9..13].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(b[13..17].try_into().unwrap()), 4);
        let (c, w) = read_config(&b).unwrap();
        assert_eq!(c, cfg());
        assert_eq!(w, 4);
    }

    #[test]
    fn width_and_shape_mismatch() {
        let p = ModelParams::<f32>::init(cfg(), &mut rng::seeded(3));
        let b = to_bytes(&p);
        assert!(matches!(from_bytes::<f64>(&b), Err(CheckpointError::VersionMismatch(_))));
        assert!(matches!(from_bytes::<f32>(&b[..b.len() - 1]), Err(CheckpointError::Truncated)));
        assert!(matches!(from_bytes::<f32>(b"nope"), Err(CheckpointError::BadMagic)));
    }
}
