//! Builds labeled datasets from treebank + store pairs, with an on-disk
//! snapshot cache.
//!
//! The cache lives in `$PROTO_ALIGN_CACHE` when set, else in `cache/` under
//! the output directory. Entries are keyed by the treebank bytes, the store
//! checksum and every option that shapes the dataset, so a stale entry can
//! never be hit.

use std::path::{Path, PathBuf};

use protoalign_core::featurestore::{fnv1a64, Manifest};
use protoalign_core::treebank::{build_pos_dataset, build_rel_dataset, LabeledDataset, Split, Task};

use crate::bundle::{bundle_to_dataset, dataset_to_bundle, Bundle};
use crate::config::RunConfig;
use crate::error::Result;
use crate::io;

pub const CACHE_ENV: &str = "PROTO_ALIGN_CACHE";

/// Cache directory name inside the output directory.
pub const CACHE_SUBDIR: &str = "cache";

pub fn cache_dir(out: &Path) -> PathBuf {
    match std::env::var_os(CACHE_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => out.join(CACHE_SUBDIR),
    }
}

fn cache_key(cfg: &RunConfig, lang: &str, split: Split, treebank: &[u8], manifest: &Manifest) -> String {
    let descriptor = serde_json::json!({
        "language": lang,
        "split": split,
        "task": cfg.task,
        "root_arcs": cfg.root_arcs,
        "treebank": format!("{:016x}", fnv1a64(treebank)),
        "store": format!("{:016x}", manifest.content_checksum),
        "n_dim": manifest.n_dim,
    });
    format!("{:016x}", fnv1a64(descriptor.to_string().as_bytes()))
}

/// Dataset for one language and split, from the cache when possible.
pub fn load_dataset(cfg: &RunConfig, lang: &str, split: Split) -> Result<LabeledDataset> {
    let (tb_path, store_path) = cfg.split_paths(lang, split)?;
    let treebank = io::read_text(&tb_path)?;
    let manifest: Manifest = io::read_json(&io::manifest_path(&store_path))?;
    let key = cache_key(cfg, lang, split, treebank.as_bytes(), &manifest);
    let stem = cache_dir(&cfg.out_dir()).join(format!("ds-{key}"));
    if let Ok(ds) = Bundle::read(&stem).and_then(|b| bundle_to_dataset(&b)) {
        return Ok(ds);
    }
    let sentences = protoalign_core::treebank::parse_conllu(&treebank)
        .map_err(|e| crate::error::CliError::Data(format!("{}: {e}", tb_path.display())))?;
    let store = io::read_store(&store_path)?;
    let ds = match cfg.task {
        Task::Pos => build_pos_dataset(&sentences, &store, lang, split)?,
        Task::Rel => build_rel_dataset(&sentences, &store, lang, split, cfg.root_arcs)?,
    };
    // the cache is an optimization; failing to fill it is not an error
    if let Err(e) = dataset_to_bundle(&ds).write(&stem) {
        eprintln!("warning: dataset cache not written: {e}");
    }
    Ok(ds)
}
