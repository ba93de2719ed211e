//! In-memory feature stores and the PCFS binary encoding.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PCFS" | version u32 = 1 | n_dim u32 | n_sentences u32
//! per sentence: n_tokens u32, then n_tokens * n_dim f32
//! checksum u64  (FNV-1a 64 over every preceding byte)
//! ```
//!
//! Reading and writing files lives in the std companion crate; this module
//! only converts between stores and bytes.

use alloc::string::String;
use alloc::vec::Vec;
use core::hash::Hasher;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"PCFS";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("bad magic bytes {0:?}, not a PCFS file")]
    BadMagic([u8; 4]),
    #[error("unsupported PCFS version {0} (expected {VERSION})")]
    Version(u32),
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("truncated PCFS data: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{0} trailing bytes after checksum")]
    TrailingBytes(usize),
    #[error("sentence {index} has {got} values, expected a multiple of n_dim = {n_dim}")]
    Shape { index: usize, got: usize, n_dim: usize },
    #[error("manifest disagrees with payload: {0}")]
    Manifest(String),
    #[error("sentence index {index} out of range ({len} sentences)")]
    Index { index: usize, len: usize },
}

/// Sidecar metadata. Serialized as `<path>.manifest.json` with exactly
/// these fields.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub language: String,
    pub model_name: String,
    pub layer: i64,
    pub treebank_file: String,
    pub n_sentences: usize,
    pub n_dim: usize,
    pub content_checksum: u64,
    pub pooling: String,
}

/// Descriptive part of a manifest; counts and checksum are derived.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoreMeta {
    pub language: String,
    pub model_name: String,
    pub layer: i64,
    pub treebank_file: String,
    pub pooling: String,
}

impl StoreMeta {
    pub fn from_manifest(m: &Manifest) -> Self {
        Self {
            language: m.language.clone(),
            model_name: m.model_name.clone(),
            layer: m.layer,
            treebank_file: m.treebank_file.clone(),
            pooling: m.pooling.clone(),
        }
    }
}

/// Row-major `n_tokens x n_dim` block of one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceFeatures {
    n_tokens: usize,
    values: Vec<f32>,
}

impl SentenceFeatures {
    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Borrowed view of one sentence's vectors.
#[derive(Clone, Copy, Debug)]
pub struct SentenceView<'a> {
    n_dim: usize,
    data: &'a [f32],
}

impl<'a> SentenceView<'a> {
    pub fn n_tokens(&self) -> usize {
        if self.n_dim == 0 {
            0
        } else {
            self.data.len() / self.n_dim
        }
    }

    pub fn n_dim(&self) -> usize {
        self.n_dim
    }

    pub fn token(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.n_dim..(i + 1) * self.n_dim]
    }

    /// The token vector widened to `f64`.
    pub fn token_f64(&self, i: usize) -> Vec<f64> {
        self.token(i).iter().map(|&x| f64::from(x)).collect()
    }
}

/// Per-word vectors for one (language, model, layer) triple.
///
/// The manifest is derived at construction, so its counts and checksum
/// always match the payload.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    n_dim: usize,
    sentences: Vec<SentenceFeatures>,
    manifest: Manifest,
}

impl FeatureStore {
    /// Builds a store from flat per-sentence buffers of length
    /// `n_tokens * n_dim`.
    pub fn new(meta: StoreMeta, n_dim: usize, sentences: Vec<Vec<f32>>) -> Result<Self, StoreError> {
        let mut blocks = Vec::with_capacity(sentences.len());
        for (index, values) in sentences.into_iter().enumerate() {
            if n_dim == 0 || values.len() % n_dim != 0 {
                return Err(StoreError::Shape {
                    index,
                    got: values.len(),
                    n_dim,
                });
            }
            blocks.push(SentenceFeatures {
                n_tokens: values.len() / n_dim,
                values,
            });
        }
        let mut store = Self {
            n_dim,
            sentences: blocks,
            manifest: Manifest {
                language: meta.language,
                model_name: meta.model_name,
                layer: meta.layer,
                treebank_file: meta.treebank_file,
                n_sentences: 0,
                n_dim,
                content_checksum: 0,
                pooling: meta.pooling,
            },
        };
        store.manifest.n_sentences = store.sentences.len();
        store.manifest.content_checksum = fnv1a64(&store.payload_bytes());
        Ok(store)
    }

    pub fn n_dim(&self) -> usize {
        self.n_dim
    }

    pub fn n_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn sentences(&self) -> &[SentenceFeatures] {
        &self.sentences
    }

    pub fn get_sentence(&self, index: usize) -> Result<SentenceView<'_>, StoreError> {
        let s = self.sentences.get(index).ok_or(StoreError::Index {
            index,
            len: self.sentences.len(),
        })?;
        Ok(SentenceView {
            n_dim: self.n_dim,
            data: &s.values,
        })
    }

    fn payload_bytes(&self) -> Vec<u8> {
        let floats: usize = self.sentences.iter().map(|s| s.values.len()).sum();
        let mut out = Vec::with_capacity(16 + 4 * self.sentences.len() + 4 * floats + 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.sentences.len() as u32).to_le_bytes());
        for s in &self.sentences {
            out.extend_from_slice(&(s.n_tokens as u32).to_le_bytes());
            for v in &s.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Full PCFS byte image, checksum included.
    pub fn encode(&self) -> Vec<u8> {
        let mut bytes = self.payload_bytes();
        let sum = fnv1a64(&bytes);
        bytes.extend_from_slice(&sum.to_le_bytes());
        bytes
    }

    /// Parses a PCFS image and attaches the given manifest, which must agree
    /// with the payload.
    pub fn decode(bytes: &[u8], manifest: Manifest) -> Result<Self, StoreError> {
        let (n_dim, sentences, checksum) = decode_payload(bytes)?;
        if manifest.content_checksum != checksum {
            return Err(StoreError::Manifest(alloc::format!(
                "content_checksum {:#018x} != payload checksum {:#018x}",
                manifest.content_checksum,
                checksum
            )));
        }
        if manifest.n_dim != n_dim || manifest.n_sentences != sentences.len() {
            return Err(StoreError::Manifest(alloc::format!(
                "manifest shape ({} sentences, n_dim {}) != payload ({} sentences, n_dim {})",
                manifest.n_sentences,
                manifest.n_dim,
                sentences.len(),
                n_dim
            )));
        }
        let store = Self::new(StoreMeta::from_manifest(&manifest), n_dim, sentences)?;
        debug_assert_eq!(store.manifest, manifest);
        Ok(store)
    }
}

/// Decodes the payload alone: `(n_dim, per-sentence values, checksum)`.
pub fn decode_payload(bytes: &[u8]) -> Result<(usize, Vec<Vec<f32>>, u64), StoreError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(StoreError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(StoreError::Version(version));
    }
    let n_dim = r.u32()? as usize;
    let n_sentences = r.u32()? as usize;
    let mut sentences = Vec::with_capacity(n_sentences.min(1 << 20));
    for _ in 0..n_sentences {
        let n_tokens = r.u32()? as usize;
        let raw = r.take(n_tokens * n_dim * 4)?;
        sentences.push(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
        );
    }
    let payload_end = r.pos;
    let stored = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    if r.pos != bytes.len() {
        return Err(StoreError::TrailingBytes(bytes.len() - r.pos));
    }
    let computed = fnv1a64(&bytes[..payload_end]);
    if stored != computed {
        return Err(StoreError::Checksum { stored, computed });
    }
    Ok((n_dim, sentences, stored))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(StoreError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}
