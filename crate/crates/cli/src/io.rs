//! File plumbing: PCFS stores with their JSON manifests, treebanks, JSON
//! artifacts. Writes go through a temporary file and a rename so a failed
//! command never leaves a half-written output behind.

use std::fs;
use std::path::{Path, PathBuf};

use protoalign_core::featurestore::{FeatureStore, Manifest};
use protoalign_core::treebank::{parse_conllu, Sentence};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, Result};

/// `<path>.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value))
}

/// Reads an artifact produced by an earlier command; malformed content is a
/// data error.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Writes the PCFS image and its manifest.
pub fn write_store(store: &FeatureStore, path: &Path) -> Result<()> {
    write_atomic(path, &store.encode())?;
    write_json(&manifest_path(path), store.manifest())
}

pub fn read_store(path: &Path) -> Result<FeatureStore> {
    let bytes = read_bytes(path)?;
    let mpath = manifest_path(path);
    let manifest: Manifest = read_json(&mpath)?;
    FeatureStore::decode(&bytes, manifest).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_treebank(path: &Path) -> Result<Vec<Sentence>> {
    parse_conllu(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use protoalign_core::featurestore::StoreMeta;

    fn store() -> FeatureStore {
        let meta = StoreMeta {
            language: "en".into(),
            model_name: "m".into(),
            layer: 7,
            treebank_file: "en.conllu".into(),
            pooling: "mean".into(),
        };
        FeatureStore::new(meta, 3, vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]]).unwrap()
    }

    #[test]
    fn store_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("en.pcfs");
        write_store(&store(), &p).unwrap();
        assert!(manifest_path(&p).ends_with("en.pcfs.manifest.json"));
        assert_eq!(fs::metadata(&p).unwrap().len(), 52);
        assert_eq!(read_store(&p).unwrap(), store());
        assert!(!dir.path().join("en.pcfs.partial").exists());
    }

    #[test]
    fn manifest_lists_exactly_the_documented_fields() {
        let v: serde_json::Value = serde_json::from_slice(&to_json_bytes(store().manifest())).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            ["content_checksum", "language", "layer", "model_name", "n_dim", "n_sentences", "pooling", "treebank_file"]
        );
    }

    #[test]
    fn corrupted_or_mismatched_stores_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("en.pcfs");
        write_store(&store(), &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes[24] ^= 1;
        fs::write(&p, &bytes).unwrap();
        assert_eq!(read_store(&p).unwrap_err().exit_code(), 3);
        fs::remove_file(manifest_path(&p)).unwrap();
        assert!(matches!(read_store(&p), Err(CliError::Io { .. })));
    }
}
