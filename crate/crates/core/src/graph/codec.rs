//! Binary graph records and shard files.
//!
//! A record is
//!
//! ```text
//! magic  "WKG\0"           4 bytes
//! version                  u8 (= 1)
//! node count               LEB128 varint
//! per node:
//!     kind                 u8 (0 word, 1 entity, 2 relation)
//!     token id             LEB128 varint
//!     position             LEB128 varint
//!     anchor flag          u8 (0 / 1)
//! adjacency                ceil(n*n / 8) bytes, row-major, bit k of the
//!                          matrix is bit (k % 8) of byte k / 8
//! ```
//!
//! A shard is records back to back.

use std::fs;
use std::io;
use std::path::Path;

use crate::graph::{Node, NodeKind, WkGraph};

pub const MAGIC: [u8; 4] = *b"WKG\0";
pub const VERSION: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic at byte {0}")]
    BadMagic(usize),
    #[error("unsupported record version {0}")]
    Version(u8),
    #[error("truncated record at byte {0}")]
    Truncated(usize),
    #[error("invalid node kind {0}")]
    Kind(u8),
}

pub fn write_varint(mut v: u64, out: &mut Vec<u8>) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn byte(&mut self) -> Result<u8, CodecError> {
        let b = *self.buf.get(self.pos).ok_or(CodecError::Truncated(self.pos))?;
        self.pos += 1;
        Ok(b)
    }

    fn varint(&mut self) -> Result<u64, CodecError> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.byte()?;
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(CodecError::Truncated(self.pos))
    }

    fn bytes(&mut self, n: usize) -> Result<&[u8], CodecError> {
        let s = self.buf.get(self.pos..self.pos + n).ok_or(CodecError::Truncated(self.pos))?;
        self.pos += n;
        Ok(s)
    }
}

pub fn encode(g: &WkGraph, out: &mut Vec<u8>) {
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    let n = g.len();
    write_varint(n as u64, out);
    for node in g.nodes() {
        out.push(node.kind as u8);
        write_varint(u64::from(node.token_id), out);
        write_varint(u64::from(node.position), out);
        out.push(u8::from(node.anchor));
    }
    let mut bits = vec![0u8; (n * n).div_ceil(8)];
    for i in 0..n {
        for j in 0..n {
            if g.connected(i, j) {
                let k = i * n + j;
                bits[k / 8] |= 1 << (k % 8);
            }
        }
    }
    out.extend_from_slice(&bits);
}

pub fn to_bytes(g: &WkGraph) -> Vec<u8> {
    let mut out = Vec::new();
    encode(g, &mut out);
    out
}

/// Decodes one record from the front of `buf`; returns it with the number
/// of bytes consumed.
pub fn decode(buf: &[u8]) -> Result<(WkGraph, usize), CodecError> {
    let mut r = Reader { buf, pos: 0 };
    if r.bytes(4)? != MAGIC {
        return Err(CodecError::BadMagic(0));
    }
    let version = r.byte()?;
    if version != VERSION {
        return Err(CodecError::Version(version));
    }
    let n = r.varint()? as usize;
    let mut nodes = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let kind_byte = r.byte()?;
        let kind = NodeKind::from_u8(kind_byte).ok_or(CodecError::Kind(kind_byte))?;
        let token_id = r.varint()? as u32;
        let position = r.varint()? as u32;
        let anchor = r.byte()? != 0;
        nodes.push(Node { kind, token_id, position, anchor });
    }
    let bits = r.bytes((n * n).div_ceil(8))?;
    let adj = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let k = i * n + j;
                    bits[k / 8] >> (k % 8) & 1 == 1
                })
                .collect()
        })
        .collect();
    Ok((WkGraph::from_parts(nodes, adj), r.pos))
}

pub fn write_shard(path: &Path, graphs: &[WkGraph]) -> io::Result<()> {
    let mut out = Vec::new();
    for g in graphs {
        encode(g, &mut out);
    }
    fs::write(path, out)
}

pub fn read_shard(path: &Path) -> Result<Vec<WkGraph>, CodecError> {
    let buf = fs::read(path)?;
    let mut graphs = Vec::new();
    let mut pos = 0;
    while pos < buf.len() {
        let (g, used) = decode(&buf[pos..]).map_err(|e| match e {
            CodecError::BadMagic(p) => CodecError::BadMagic(pos + p),
            CodecError::Truncated(p) => CodecError::Truncated(pos + p),
            other => other,
        })?;
        graphs.push(g);
        pos += used;
    }
    Ok(graphs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_record_layout() {
        let mut g = WkGraph::new();
        g.add_node(Node::word(3, 0));
        g.add_node(Node::entity(300, 1, true));
        g.connect(0, 1);
        let bytes = to_bytes(&g);
        assert_eq!(
            bytes,
            vec![b'W', b'K', b'G', 0, 1, 2, 0, 3, 0, 0, 1, 0xac, 0x02, 1, 1, 0b1111]
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(decode(b"nope1"), Err(CodecError::BadMagic(0))));
        assert!(matches!(decode(b"WKG\0\x09\x00"), Err(CodecError::Version(9))));
        assert!(matches!(decode(b"WKG\0\x01\x02"), Err(CodecError::Truncated(_))));
    }

    fn arb_graph() -> impl Strategy<Value = WkGraph> {
        (1usize..12).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u8..3, 0u32..100_000, 0u32..300, any::<bool>()), n),
                proptest::collection::vec(any::<bool>(), n * n),
            )
                .prop_map(move |(ns, bits)| {
                    let mut g = WkGraph::new();
                    for (k, id, p, a) in ns {
                        g.add_node(Node { kind: NodeKind::from_u8(k).unwrap(), token_id: id, position: p, anchor: a });
                    }
                    for i in 0..n {
                        for j in 0..n {
                            if bits[i * n + j] {
                                g.connect(i, j);
                            }
                        }
                    }
                    g
                })
        })
    }

    proptest! {
        #[test]
        fn shard_round_trip(graphs in proptest::collection::vec(arb_graph(), 0..5)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("s.bin");
            write_shard(&p, &graphs).unwrap();
            prop_assert_eq!(read_shard(&p).unwrap(), graphs);
        }
    }
}
