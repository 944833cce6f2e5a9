//! Binary index file.
//!
//! ```text
//! magic "A4BIDX1" (7 bytes)
//! u32 version = 1
//! u16 provider_id length, provider_id bytes (UTF-8)
//! u32 dimension
//! u64 count
//! count x { u16 id length, id bytes, dimension x f32 image, dimension x f32 text }
//! graph section:
//!   u8 variant (0 exact, 1 ann)
//!   ann only: u32 m, u32 ef_construction, u32 ef_search, u64 seed,
//!             then the image graph and the text graph, each:
//!             u32 entry (u32::MAX when empty), u32 max_level,
//!             count x { u8 layers, layers x { u32 n, n x u32 neighbor } }
//! u64 checksum: FNV-1a 64 over every preceding byte
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use super::graph::LayeredGraph;
use super::{AnnParams, IndexError, IndexVariant, Search, VectorIndex};
use crate::embedding::DIM;
use crate::hash::fnv1a64;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 7] = b"A4BIDX1";
pub const VERSION: u32 = 1;
const NO_ENTRY: u32 = u32::MAX;

impl<S: Scalar> VectorIndex<S> {
    /// Serializes to the file layout above.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.len() * (2 * DIM * 4 + 16));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.provider_id);
        out.extend_from_slice(&(DIM as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for e in self.entries() {
            put_str(&mut out, e.id);
            for v in e.image.iter().chain(e.text) {
                out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
            }
        }
        match &self.search {
            Search::Exact => out.push(0),
            Search::Ann {
                params,
                image_graph,
                text_graph,
            } => {
                out.push(1);
                out.extend_from_slice(&(params.m as u32).to_le_bytes());
                out.extend_from_slice(&(params.ef_construction as u32).to_le_bytes());
                out.extend_from_slice(&(params.ef_search as u32).to_le_bytes());
                out.extend_from_slice(&params.seed.to_le_bytes());
                put_graph(&mut out, image_graph);
                put_graph(&mut out, text_graph);
            }
        }
        let checksum = fnv1a64(&out);
        out.extend_from_slice(&checksum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(IndexError::VersionMismatch("bad magic bytes".into()));
        }
        if bytes.len() < MAGIC.len() + 4 + 8 {
            return Err(IndexError::ChecksumMismatch);
        }
        let (payload, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if fnv1a64(payload) != stored {
            return Err(IndexError::ChecksumMismatch);
        }
        let mut r = Reader {
            buf: payload,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != VERSION {
            return Err(IndexError::VersionMismatch(format!("version {version}")));
        }
        let provider_id = r.string()?;
        let dim = r.u32()? as usize;
        if dim != DIM {
            return Err(IndexError::Corrupt(format!(
                "dimension {dim}, expected {DIM}"
            )));
        }
        let count = r.u64()? as usize;
        if count > u32::MAX as usize {
            return Err(IndexError::Corrupt(format!("entry count {count}")));
        }
        let mut ids = Vec::with_capacity(count.min(1 << 20));
        let mut images = Vec::with_capacity(count.min(1 << 20) * DIM);
        let mut texts = Vec::with_capacity(count.min(1 << 20) * DIM);
        for _ in 0..count {
            ids.push(r.string()?);
            for _ in 0..DIM {
                images.push(S::from_stored(r.f32()?));
            }
            for _ in 0..DIM {
                texts.push(S::from_stored(r.f32()?));
            }
        }
        let search = match r.u8()? {
            0 => Search::Exact,
            1 => {
                let params = AnnParams {
                    m: r.u32()? as usize,
                    ef_construction: r.u32()? as usize,
                    ef_search: r.u32()? as usize,
                    seed: r.u64()?,
                };
                let image_graph =
                    read_graph(&mut r, params.m, params.ef_construction, params.seed, count)?;
                let text_graph = read_graph(
                    &mut r,
                    params.m,
                    params.ef_construction,
                    params.seed ^ 0x5445_5854,
                    count,
                )?;
                Search::Ann {
                    params,
                    image_graph,
                    text_graph,
                }
            }
            v => return Err(IndexError::Corrupt(format!("unknown variant tag {v}"))),
        };
        if r.pos != payload.len() {
            return Err(IndexError::Corrupt("trailing bytes before checksum".into()));
        }

        let variant = match &search {
            Search::Exact => IndexVariant::Exact,
            Search::Ann { params, .. } => IndexVariant::Ann(*params),
        };
        let mut index = VectorIndex::new(provider_id, variant);
        index.search = search;
        for (pos, id) in ids.into_iter().enumerate() {
            if index.positions.insert(id.clone(), pos as u32).is_some() {
                return Err(IndexError::Corrupt(format!("duplicate id {id:?}")));
            }
            index.ids.push(id);
        }
        index.images = images;
        index.texts = texts;
        Ok(index)
    }
}

pub fn save_index<S: Scalar>(
    index: &VectorIndex<S>,
    path: impl AsRef<Path>,
) -> Result<(), IndexError> {
    std::fs::write(path, index.to_bytes())?;
    Ok(())
}

pub fn load_index<S: Scalar>(path: impl AsRef<Path>) -> Result<VectorIndex<S>, IndexError> {
    let bytes = std::fs::read(path)?;
    VectorIndex::from_bytes(&bytes)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    let bytes = s.as_bytes();
    let len = u16::try_from(bytes.len()).expect("identifier longer than 65535 bytes");
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(bytes);
}

fn put_graph(out: &mut Vec<u8>, g: &LayeredGraph) {
    out.extend_from_slice(&g.entry.unwrap_or(NO_ENTRY).to_le_bytes());
    out.extend_from_slice(&(g.max_level as u32).to_le_bytes());
    for layers in &g.links {
        out.push(layers.len() as u8);
        for list in layers {
            out.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for n in list {
                out.extend_from_slice(&n.to_le_bytes());
            }
        }
    }
}

fn read_graph(
    r: &mut Reader<'_>,
    m: usize,
    ef_construction: usize,
    seed: u64,
    count: usize,
) -> Result<LayeredGraph, IndexError> {
    let mut g = LayeredGraph::new(m, ef_construction, seed);
    let entry = r.u32()?;
    g.entry = (entry != NO_ENTRY).then_some(entry);
    g.max_level = r.u32()? as usize;
    match g.entry {
        Some(e) if e as usize >= count => {
            return Err(IndexError::Corrupt(format!("entry point {e} out of range")))
        }
        None if count > 0 => return Err(IndexError::Corrupt("missing entry point".into())),
        _ => {}
    }
    for _ in 0..count {
        let n_layers = r.u8()? as usize;
        if n_layers == 0 || n_layers > g.max_level + 1 {
            return Err(IndexError::Corrupt(format!("node with {n_layers} layers")));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let n = r.u32()? as usize;
            if n > count {
                return Err(IndexError::Corrupt(format!("neighbor list of length {n}")));
            }
            let mut list = Vec::with_capacity(n);
            for _ in 0..n {
                let nb = r.u32()?;
                if nb as usize >= count {
                    return Err(IndexError::Corrupt(format!("neighbor {nb} out of range")));
                }
                list.push(nb);
            }
            layers.push(list);
        }
        g.push_links(layers);
    }
    if let Some(e) = g.entry {
        if g.links[e as usize].len() != g.max_level + 1 {
            return Err(IndexError::Corrupt(
                "entry point is not on the top layer".into(),
            ));
        }
    }
    Ok(g)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| IndexError::Corrupt("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, IndexError> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f32(&mut self) -> Result<f32, IndexError> {
        let v = f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(IndexError::Corrupt("non-finite vector component".into()));
        }
        Ok(v)
    }

    fn string(&mut self) -> Result<String, IndexError> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| IndexError::Corrupt("identifier is not UTF-8".into()))
    }
}
