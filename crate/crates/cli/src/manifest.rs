//! `manifest.json` in the output directory: for every command that wrote
//! there, the config hash and the files it produced with sizes and
//! checksums.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use protoalign_core::featurestore::fnv1a64;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub fnv1a64: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandEntry {
    pub config_hash: String,
    pub files: Vec<FileEntry>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputManifest {
    pub commands: BTreeMap<String, CommandEntry>,
}

fn relative(out: &Path, p: &Path) -> String {
    let rel = p.strip_prefix(out).unwrap_or(p);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Records `files` (sorted, deduplicated) under `command`, keeping entries
/// of other commands.
pub fn record(out: &Path, command: &str, config_hash: &str, files: &[PathBuf]) -> Result<PathBuf> {
    let path = out.join(MANIFEST_FILE);
    let mut m: OutputManifest = if path.is_file() {
        io::read_json(&path).unwrap_or_default()
    } else {
        OutputManifest::default()
    };
    let mut entries = Vec::with_capacity(files.len());
    for f in files {
        let bytes = std::fs::read(f).map_err(|e| CliError::io(f, e))?;
        entries.push(FileEntry {
            path: relative(out, f),
            bytes: bytes.len() as u64,
            fnv1a64: format!("{:016x}", fnv1a64(&bytes)),
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    entries.dedup_by(|a, b| a.path == b.path);
    m.commands.insert(
        command.to_string(),
        CommandEntry {
            config_hash: config_hash.to_string(),
            files: entries,
        },
    );
    io::write_json(&path, &m)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_are_sorted_and_other_commands_kept() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        std::fs::write(out.join("b.csv"), b"2").unwrap();
        std::fs::create_dir(out.join("sub")).unwrap();
        std::fs::write(out.join("sub/a.json"), b"1").unwrap();
        record(out, "synth", "00", &[out.join("b.csv")]).unwrap();
        record(out, "align", "ff", &[out.join("sub/a.json"), out.join("b.csv"), out.join("b.csv")]).unwrap();
        let m: OutputManifest = io::read_json(&out.join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.commands.len(), 2);
        let paths: Vec<&str> = m.commands["align"].files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, ["b.csv", "sub/a.json"]);
        assert_eq!(m.commands["align"].files[0].fnv1a64, format!("{:016x}", fnv1a64(b"2")));
    }
}
