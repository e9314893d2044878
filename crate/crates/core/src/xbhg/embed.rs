use std::collections::HashMap;
use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;

use super::GraphError;

/// Maps function/event text to a fixed-width vector.
pub trait TextEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Signed feature hashing over identifier tokens, token bigrams and the raw string,
/// followed by L2 normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be positive");
        Self { dim }
    }
}

fn hash_feature(namespace: u8, bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u8(namespace);
    h.write(bytes);
    // fnv's high bits mix poorly on short keys; finalize with a murmur-style avalanche.
    let mut x = h.finish();
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^ (x >> 33)
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric() && c != '_')
        .filter(|t| !t.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}

impl TextEmbedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        if text.is_empty() {
            return v;
        }
        let mut add = |h: u64| {
            let bucket = (h % self.dim as u64) as usize;
            v[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        };
        let toks = tokens(text);
        for t in &toks {
            add(hash_feature(1, t.as_bytes()));
        }
        for w in toks.windows(2) {
            add(hash_feature(2, format!("{} {}", w[0], w[1]).as_bytes()));
        }
        add(hash_feature(3, text.as_bytes()));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// Deterministic hashing embedding of `text` into `dim` coordinates; empty text maps to zeros.
pub fn embed_text(text: &str, dim: usize) -> Vec<f64> {
    HashingEmbedder::new(dim).embed(text)
}

/// Precomputed vectors (e.g. from a pretrained code model) keyed by exact text.
/// Unknown text falls back to hashing.
#[derive(Debug, Clone)]
pub struct TableEmbedder {
    table: HashMap<String, Vec<f64>>,
    fallback: HashingEmbedder,
}

impl TableEmbedder {
    pub fn new(table: HashMap<String, Vec<f64>>, dim: usize) -> Result<Self, GraphError> {
        if let Some((text, v)) = table.iter().find(|(_, v)| v.len() != dim) {
            return Err(GraphError::EmbeddingDim {
                text: text.clone(),
                got: v.len(),
                want: dim,
            });
        }
        Ok(Self {
            table,
            fallback: HashingEmbedder::new(dim),
        })
    }

    /// Loads a JSON object `{ "<text>": [f64; dim], ... }`.
    pub fn load(path: impl AsRef<Path>, dim: usize) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let table = serde_json::from_str(&text).map_err(|e| GraphError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::new(table, dim)
    }
}

impl TextEmbedder for TableEmbedder {
    fn dim(&self) -> usize {
        self.fallback.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        match self.table.get(text) {
            Some(v) => v.clone(),
            None => self.fallback.embed(text),
        }
    }
}
