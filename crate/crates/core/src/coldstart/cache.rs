use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ColdstartError, ExternalItemDoc, Retrieved};

pub const CACHE_FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const VECTORS: &str = "vectors.f32";

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub doc: ExternalItemDoc,
    pub content_hash: String,
    /// Unit-length embedding.
    pub vector: Vec<f32>,
}

/// Embedded documents with a fixed vector dimension.
///
/// On disk a cache is a directory with `manifest.json` (format version,
/// dimension, model id, and per document its fields and content hash) and
/// `vectors.f32`, the vectors as little-endian `f32` in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCache {
    pub model_id: String,
    dimension: Option<usize>,
    entries: BTreeMap<String, CacheEntry>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    model_id: String,
    dimension: Option<usize>,
    entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    doc: ExternalItemDoc,
    content_hash: String,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ColdstartError {
    ColdstartError::Io { path: path.display().to_string(), msg: e.to_string() }
}

impl EmbeddingCache {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self { model_id: model_id.into(), dimension: None, entries: BTreeMap::new() }
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&CacheEntry> {
        self.entries.get(doc_id)
    }

    pub fn doc(&self, doc_id: &str) -> Option<&ExternalItemDoc> {
        self.entries.get(doc_id).map(|e| &e.doc)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CacheEntry> {
        self.entries.values()
    }

    /// Stores `vector` scaled to unit length. The first vector fixes the
    /// cache dimension.
    pub fn insert(&mut self, doc: ExternalItemDoc, content_hash: String, vector: Vec<f32>) -> Result<(), ColdstartError> {
        if let Some(d) = self.dimension {
            if d != vector.len() {
                return Err(ColdstartError::DimensionMismatch { expected: d, got: vector.len() });
            }
        }
        if vector.is_empty() || vector.iter().any(|x| !x.is_finite()) {
            return Err(ColdstartError::Format(format!("doc {}: vector must be non-empty and finite", doc.doc_id)));
        }
        let norm = vector.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(ColdstartError::Format(format!("doc {}: zero vector", doc.doc_id)));
        }
        let vector = vector.iter().map(|&x| (x as f64 / norm) as f32).collect::<Vec<_>>();
        self.dimension = Some(vector.len());
        self.entries.insert(doc.doc_id.clone(), CacheEntry { doc, content_hash, vector });
        Ok(())
    }

    /// Cosine similarity of `query` against every entry; the best `k`,
    /// by similarity descending and then doc id ascending.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<Retrieved>, ColdstartError> {
        if self.is_empty() {
            return Err(ColdstartError::EmptyCache);
        }
        if k == 0 {
            return Err(ColdstartError::ZeroK);
        }
        if let Some(d) = self.dimension.filter(|d| *d != query.len()) {
            return Err(ColdstartError::DimensionMismatch { expected: d, got: query.len() });
        }
        let mut hits: Vec<Retrieved> =
            self.entries.values().map(|e| Retrieved { doc_id: e.doc.doc_id.clone(), similarity: cosine(query, &e.vector) }).collect();
        hits.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.doc_id.cmp(&b.doc_id)));
        hits.truncate(k);
        Ok(hits)
    }

    /// Writes the cache to `dir`, replacing what was there. Each file is
    /// written to a temporary name first and renamed into place.
    pub fn persist(&self, dir: impl AsRef<Path>) -> Result<(), ColdstartError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut bytes = Vec::with_capacity(self.len() * self.dimension.unwrap_or(0) * 4);
        for e in self.entries.values() {
            for x in &e.vector {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format_version: CACHE_FORMAT_VERSION,
            model_id: self.model_id.clone(),
            dimension: self.dimension,
            entries: self.entries.values().map(|e| ManifestEntry { doc: e.doc.clone(), content_hash: e.content_hash.clone() }).collect(),
        };
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| ColdstartError::Format(e.to_string()))?;
        write_atomic(&dir.join(VECTORS), &bytes)?;
        write_atomic(&dir.join(MANIFEST), &json)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, ColdstartError> {
        let dir = dir.as_ref();
        let mpath = dir.join(MANIFEST);
        let text = std::fs::read(&mpath).map_err(|e| io_err(&mpath, e))?;
        let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| ColdstartError::Format(e.to_string()))?;
        if manifest.format_version != CACHE_FORMAT_VERSION {
            return Err(ColdstartError::Format(format!("unsupported format_version {}", manifest.format_version)));
        }
        let vpath = dir.join(VECTORS);
        let bytes = std::fs::read(&vpath).map_err(|e| io_err(&vpath, e))?;
        let dim = manifest.dimension.unwrap_or(0);
        if bytes.len() != manifest.entries.len() * dim * 4 {
            return Err(ColdstartError::Format(format!(
                "{} holds {} bytes, expected {} vectors of dimension {dim}",
                vpath.display(),
                bytes.len(),
                manifest.entries.len()
            )));
        }
        let mut entries = BTreeMap::new();
        for (i, m) in manifest.entries.into_iter().enumerate() {
            let vector =
                bytes[i * dim * 4..(i + 1) * dim * 4].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            entries.insert(m.doc.doc_id.clone(), CacheEntry { doc: m.doc, content_hash: m.content_hash, vector });
        }
        Ok(Self { model_id: manifest.model_id, dimension: manifest.dimension, entries })
    }

    /// Loads `dir` if it holds a cache, otherwise starts an empty one.
    pub fn load_or_new(dir: impl AsRef<Path>, model_id: &str) -> Result<Self, ColdstartError> {
        if dir.as_ref().join(MANIFEST).exists() {
            Self::load(dir)
        } else {
            Ok(Self::new(model_id))
        }
    }
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ColdstartError> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str) -> ExternalItemDoc {
        ExternalItemDoc { doc_id: id.into(), title: id.into(), release_year: None, description: "d".into(), source_tag: String::new() }
    }

    #[test]
    fn orthogonal_is_zero_and_ties_break_by_id() {
        let mut c = EmbeddingCache::new("m");
        c.insert(doc("b"), "h".into(), vec![1.0, 0.0]).unwrap();
        c.insert(doc("a"), "h".into(), vec![2.0, 0.0]).unwrap();
        c.insert(doc("z"), "h".into(), vec![0.0, 3.0]).unwrap();
        let hits = c.search(&[1.0, 0.0], 3).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "z"]);
        assert_eq!(hits[2].similarity, 0.0);
    }

    #[test]
    fn dimension_is_fixed_by_first_vector() {
        let mut c = EmbeddingCache::new("m");
        c.insert(doc("a"), "h".into(), vec![1.0, 0.0]).unwrap();
        assert!(matches!(c.insert(doc("b"), "h".into(), vec![1.0]), Err(ColdstartError::DimensionMismatch { expected: 2, got: 1 })));
        assert!(c.search(&[1.0, 0.0, 0.0], 1).is_err());
        assert!(c.insert(doc("c"), "h".into(), vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn persist_round_trip_is_bit_identical() {
        let mut c = EmbeddingCache::new("stub");
        for i in 0..20 {
            let v: Vec<f32> = (0..7).map(|j| ((i * 7 + j) as f32).sin() + 0.1).collect();
            c.insert(doc(&format!("d{i:02}")), format!("h{i}"), v).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        c.persist(dir.path()).unwrap();
        let back = EmbeddingCache::load(dir.path()).unwrap();
        assert_eq!(back, c);
        for (a, b) in c.iter().zip(back.iter()) {
            assert!(a.vector.iter().zip(&b.vector).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        std::fs::write(dir.path().join(VECTORS), [0u8; 3]).unwrap();
        assert!(matches!(EmbeddingCache::load(dir.path()), Err(ColdstartError::Format(_))));
    }
}
