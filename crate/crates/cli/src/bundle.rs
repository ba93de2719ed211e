//! Parameter bundles: a binary blob of f64 tensors plus a JSON index.
//!
//! `<stem>.tensors` holds `"PATN" | version u32 | count u32 | values (f64 LE)
//! | FNV-1a 64 of everything before it`; `<stem>.json` names each tensor with
//! its shape and offset and carries non-numeric metadata.

use std::path::{Path, PathBuf};

use protoalign_core::featurestore::fnv1a64;
use protoalign_core::linalg::Matrix;
use protoalign_core::metalearn::{MetaMode, MetaModel};
use protoalign_core::probe::PrototypeSet;
use protoalign_core::tensor::{LinearMap, Mlp2};
use protoalign_core::treebank::{ConceptVocab, LabeledDataset, Provenance};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};
use crate::io;

const MAGIC: &[u8; 4] = b"PATN";
const VERSION: u32 = 1;
const FORMAT: &str = "proto-align-tensors";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Index {
    format: String,
    version: u32,
    checksum: String,
    tensors: Vec<TensorEntry>,
    meta: Value,
}

/// Named tensors in insertion order plus free-form metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    tensors: Vec<(String, Matrix)>,
    pub meta: Value,
}

impl Bundle {
    pub fn new(meta: Value) -> Self {
        Self {
            tensors: Vec::new(),
            meta,
        }
    }

    pub fn push(&mut self, name: impl Into<String>, m: &Matrix) {
        self.tensors.push((name.into(), m.clone()));
    }

    pub fn push_linear(&mut self, prefix: &str, map: &LinearMap) {
        self.push(format!("{prefix}.weight"), map.weight());
        if let Some(b) = map.bias() {
            self.push(format!("{prefix}.bias"), &Matrix::from_vec(1, b.len(), b.to_vec()));
        }
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| CliError::Data(format!("bundle has no tensor {name:?}")))
    }

    pub fn linear(&self, prefix: &str) -> Result<LinearMap> {
        let w = self.get(&format!("{prefix}.weight"))?.clone();
        let name = format!("{prefix}.bias");
        let b = self
            .tensors
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, m)| m.as_slice().to_vec());
        if let Some(b) = &b {
            if b.len() != w.rows() {
                return Err(CliError::Data(format!("{name} has {} values for {} outputs", b.len(), w.rows())));
            }
        }
        Ok(LinearMap::from_parts(w, b))
    }

    fn encode(&self) -> (Vec<u8>, Vec<TensorEntry>) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        let mut entries = Vec::new();
        let mut offset = 0;
        for (name, m) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                rows: m.rows(),
                cols: m.cols(),
                offset,
            });
            offset += m.as_slice().len();
            for v in m.as_slice() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = fnv1a64(&bytes);
        bytes.extend_from_slice(&sum.to_le_bytes());
        (bytes, entries)
    }

    /// Writes `<stem>.tensors` and `<stem>.json`; returns both paths.
    pub fn write(&self, stem: &Path) -> Result<[PathBuf; 2]> {
        let (bytes, tensors) = self.encode();
        let sum = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("8 bytes"));
        let index = Index {
            format: FORMAT.into(),
            version: VERSION,
            checksum: format!("{sum:016x}"),
            tensors,
            meta: self.meta.clone(),
        };
        let (bin, json) = paths(stem);
        io::write_atomic(&bin, &bytes)?;
        io::write_json(&json, &index)?;
        Ok([bin, json])
    }

    pub fn exists(stem: &Path) -> bool {
        let (bin, json) = paths(stem);
        bin.is_file() && json.is_file()
    }

    pub fn read(stem: &Path) -> Result<Self> {
        let (bin, json) = paths(stem);
        let index: Index = io::read_json(&json)?;
        let bytes = io::read_bytes(&bin)?;
        let bad = |m: String| CliError::Data(format!("{}: {m}", bin.display()));
        if index.format != FORMAT || index.version != VERSION {
            return Err(bad(format!("unsupported bundle {} v{}", index.format, index.version)));
        }
        if bytes.len() < 20 || &bytes[..4] != MAGIC {
            return Err(bad("not a tensor bundle".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if fnv1a64(body) != stored || format!("{stored:016x}") != index.checksum {
            return Err(bad("checksum mismatch".into()));
        }
        let count = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
        if count != index.tensors.len() {
            return Err(bad(format!("{count} tensors in blob, {} in index", index.tensors.len())));
        }
        let values: Vec<f64> = body[12..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if (body.len() - 12) % 8 != 0 {
            return Err(bad("blob length is not a whole number of values".into()));
        }
        let mut tensors = Vec::with_capacity(count);
        let mut expect = 0;
        for e in &index.tensors {
            let len = e.rows * e.cols;
            if e.offset != expect || e.offset + len > values.len() {
                return Err(bad(format!("tensor {} out of bounds", e.name)));
            }
            tensors.push((e.name.clone(), Matrix::from_vec(e.rows, e.cols, values[e.offset..e.offset + len].to_vec())));
            expect += len;
        }
        if expect != values.len() {
            return Err(bad("unindexed trailing values".into()));
        }
        Ok(Self {
            tensors,
            meta: index.meta,
        })
    }
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    // appended rather than replaced: language codes may contain dots
    let with = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".tensors"), with(".json"))
}

fn meta_field<T: serde::de::DeserializeOwned>(meta: &Value, key: &str) -> Result<T> {
    let v = meta
        .get(key)
        .ok_or_else(|| CliError::Data(format!("bundle metadata lacks {key:?}")))?;
    serde_json::from_value(v.clone()).map_err(|e| CliError::Data(format!("bundle metadata {key:?}: {e}")))
}

pub fn prototypes_to_bundle(ps: &PrototypeSet) -> Bundle {
    let mut b = Bundle::new(serde_json::json!({ "kind": "prototypes", "vocab": ps.vocab() }));
    push_prototypes(&mut b, "probe", ps);
    b
}

fn push_prototypes(b: &mut Bundle, prefix: &str, ps: &PrototypeSet) {
    b.push_linear(&format!("{prefix}.transform"), ps.transform());
    b.push(format!("{prefix}.class_means"), ps.class_means());
}

fn read_prototypes(b: &Bundle, prefix: &str, vocab: ConceptVocab) -> Result<PrototypeSet> {
    let t = b.linear(&format!("{prefix}.transform"))?;
    let means = b.get(&format!("{prefix}.class_means"))?.clone();
    if means.rows() != vocab.len() || means.cols() != t.input_dim() {
        return Err(CliError::Data(format!("{prefix}: class means do not match vocabulary and transform")));
    }
    Ok(PrototypeSet::new(t, means, vocab))
}

pub fn bundle_to_prototypes(b: &Bundle) -> Result<PrototypeSet> {
    read_prototypes(b, "probe", meta_field(&b.meta, "vocab")?)
}

pub fn model_to_bundle(model: &MetaModel) -> Bundle {
    let langs: Vec<&String> = model.g.keys().collect();
    let mut b = Bundle::new(serde_json::json!({
        "kind": "meta-model",
        "mode": model.mode,
        "dropout": model.f.dropout_p(),
        "adapters": langs,
        "vocab": model.vocab(),
    }));
    b.push_linear("f.layer1", &model.f.layer1);
    b.push_linear("f.layer2", &model.f.layer2);
    for (lang, g) in &model.g {
        b.push_linear(&format!("g.{lang}"), g);
    }
    if let Some(h) = &model.h {
        b.push_linear("h", h);
    }
    if let Some(s) = &model.source {
        push_prototypes(&mut b, "source", s);
    }
    b
}

pub fn bundle_to_model(b: &Bundle) -> Result<MetaModel> {
    let mode: MetaMode = meta_field(&b.meta, "mode")?;
    let dropout: f64 = meta_field(&b.meta, "dropout")?;
    let langs: Vec<String> = meta_field(&b.meta, "adapters")?;
    let vocab: Option<ConceptVocab> = meta_field(&b.meta, "vocab")?;
    let (l1, l2) = (b.linear("f.layer1")?, b.linear("f.layer2")?);
    if l1.output_dim() != l2.input_dim() || !(0.0..1.0).contains(&dropout) {
        return Err(CliError::Data("inconsistent perceptron in bundle".into()));
    }
    let f = Mlp2::from_layers(l1, l2, dropout);
    let g = langs
        .into_iter()
        .map(|l| b.linear(&format!("g.{l}")).map(|m| (l, m)))
        .collect::<Result<_>>()?;
    let h = match mode {
        MetaMode::Zeroshot => Some(b.linear("h")?),
        _ => None,
    };
    let source = vocab.map(|v| read_prototypes(b, "source", v)).transpose()?;
    Ok(MetaModel { mode, f, g, h, source })
}

pub fn adapter_to_bundle(language: &str, n_support: usize, g: &LinearMap) -> Bundle {
    let mut b = Bundle::new(serde_json::json!({ "kind": "adapter", "language": language, "n_support": n_support }));
    b.push_linear("g", g);
    b
}

pub fn dataset_to_bundle(ds: &LabeledDataset) -> Bundle {
    let mut b = Bundle::new(serde_json::json!({
        "kind": "dataset",
        "labels": ds.labels(),
        "sentences": ds.sentence_of(),
        "vocab": ds.vocab(),
        "provenance": ds.provenance(),
    }));
    b.push("features", ds.features());
    b
}

pub fn bundle_to_dataset(b: &Bundle) -> Result<LabeledDataset> {
    let labels: Vec<usize> = meta_field(&b.meta, "labels")?;
    let sentences: Vec<usize> = meta_field(&b.meta, "sentences")?;
    let vocab: ConceptVocab = meta_field(&b.meta, "vocab")?;
    let provenance: Provenance = meta_field(&b.meta, "provenance")?;
    Ok(LabeledDataset::new(b.get("features")?.clone(), labels, sentences, vocab, provenance)?)
}
