//! Keyed store of context vectors with binary persistence.
//!
//! One entry per (layer, label); lookups are pure map reads and never run a
//! model forward pass. The file format is versioned and carries the digest
//! of the model the contexts were extracted from; float payloads round-trip
//! bitwise.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::binio::{self, Reader};
use crate::engine::context::{ContextVector, Provenance};
use crate::error::{Error, Result};
use crate::tensor::DenseVector;

const MAGIC: &[u8; 8] = b"CTXCACHE";
const VERSION: u32 = 1;

/// In-memory context store bound to one model.
#[derive(Debug, Clone, Default)]
pub struct ContextCache {
    model_digest: String,
    entries: BTreeMap<(usize, String), ContextVector>,
}

impl ContextCache {
    pub fn new(model_digest: impl Into<String>) -> Self {
        Self {
            model_digest: model_digest.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn model_digest(&self) -> &str {
        &self.model_digest
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts a context, replacing any previous entry for its (layer, label).
    pub fn put(&mut self, context: ContextVector) {
        self.entries
            .insert((context.layer, context.label.clone()), context);
    }

    pub fn get(&self, layer: usize, label: &str) -> Result<&ContextVector> {
        self.entries
            .get(&(layer, label.to_string()))
            .ok_or_else(|| Error::CacheMiss {
                layer,
                label: label.to_string(),
            })
    }

    pub fn contains(&self, layer: usize, label: &str) -> bool {
        self.entries.contains_key(&(layer, label.to_string()))
    }

    /// Labels cached at a given layer, sorted.
    pub fn labels_at(&self, layer: usize) -> Vec<&str> {
        self.entries
            .keys()
            .filter(|(l, _)| *l == layer)
            .map(|(_, label)| label.as_str())
            .collect()
    }

    /// Digest of the serialized cache contents.
    pub fn digest(&self) -> String {
        binio::short_digest(&self.encode())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        binio::put_u32(&mut buf, VERSION);
        binio::put_string(&mut buf, &self.model_digest);
        binio::put_u64(&mut buf, self.entries.len() as u64);
        for ((layer, label), ctx) in &self.entries {
            binio::put_u32(&mut buf, *layer as u32);
            binio::put_string(&mut buf, label);
            match &ctx.provenance {
                Provenance::MeanOfSet { sample_count } => {
                    binio::put_u8(&mut buf, 0);
                    binio::put_u64(&mut buf, *sample_count as u64);
                }
                Provenance::LastToken { phrase } => {
                    binio::put_u8(&mut buf, 1);
                    binio::put_u64(&mut buf, phrase.len() as u64);
                    for &t in phrase {
                        binio::put_u32(&mut buf, t);
                    }
                }
            }
            binio::put_u64(&mut buf, ctx.vector.len() as u64);
            binio::put_f64_slice(&mut buf, ctx.vector.values());
        }
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let cache_err = |msg: String| Error::CacheFormat(msg);
        let mut r = Reader::new(bytes);
        let magic = r.take(8).map_err(|e| cache_err(e.to_string()))?;
        if magic != MAGIC {
            return Err(cache_err("bad cache magic".into()));
        }
        let version = r.u32().map_err(|e| cache_err(e.to_string()))?;
        if version != VERSION {
            return Err(cache_err(format!("unsupported cache version {version}")));
        }
        let model_digest = r.string().map_err(|e| cache_err(e.to_string()))?;
        let n = r.u64().map_err(|e| cache_err(e.to_string()))? as usize;
        let mut cache = Self::new(model_digest);
        for _ in 0..n {
            let mut step = || -> Result<ContextVector> {
                let layer = r.u32()? as usize;
                let label = r.string()?;
                let tag = r.u8()?;
                let provenance = match tag {
                    0 => Provenance::MeanOfSet {
                        sample_count: r.u64()? as usize,
                    },
                    1 => {
                        let len = r.u64()? as usize;
                        let mut phrase = Vec::with_capacity(len);
                        for _ in 0..len {
                            phrase.push(r.u32()?);
                        }
                        Provenance::LastToken { phrase }
                    }
                    other => {
                        return Err(Error::Format(format!("unknown provenance tag {other}")))
                    }
                };
                let len = r.u64()? as usize;
                let vector = DenseVector::new(r.f64_vec(len)?);
                Ok(ContextVector {
                    label,
                    layer,
                    vector,
                    provenance,
                })
            };
            let ctx = step().map_err(|e| cache_err(e.to_string()))?;
            cache.put(ctx);
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::decode(&bytes)
    }
}
