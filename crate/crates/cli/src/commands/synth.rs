use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use protoalign_core::synth::{generate, SyntheticSpec};
use protoalign_core::treebank::{to_conllu, Split};

use super::probe::split_name;
use crate::error::{CliError, Result};
use crate::io;

/// Loads a synthetic spec; `--seed` replaces its seed.
pub fn load_spec(path: &Path, seed: Option<u64>) -> Result<SyntheticSpec> {
    let text = io::read_text(path).map_err(|e| CliError::Config(e.to_string()))?;
    let mut spec: SyntheticSpec = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

/// Writes a treebank and a feature store per synthetic language and split,
/// plus `run.json`: a run config over those files with the first language
/// as source and the last as the held-out target.
pub fn synth(spec: &SyntheticSpec, out: &Path) -> Result<Vec<PathBuf>> {
    let langs = generate(spec)?;
    let mut files = Vec::new();
    let mut treebanks: BTreeMap<String, BTreeMap<Split, String>> = BTreeMap::new();
    let mut stores: BTreeMap<String, BTreeMap<Split, String>> = BTreeMap::new();
    for lang in &langs {
        for split in [Split::Train, Split::Dev, Split::Test] {
            let s = lang.split(split);
            let stem = format!("{}/{}-{}", lang.name, lang.name, split_name(split));
            let tb = out.join(format!("{stem}.conllu"));
            let st = out.join(format!("{stem}.pcfs"));
            io::write_atomic(&tb, to_conllu(&s.sentences).as_bytes())?;
            io::write_store(&s.store, &st)?;
            files.extend([tb, io::manifest_path(&st), st]);
            treebanks.entry(lang.name.clone()).or_default().insert(split, format!("{stem}.conllu"));
            stores.entry(lang.name.clone()).or_default().insert(split, format!("{stem}.pcfs"));
        }
    }
    let names: Vec<&String> = treebanks.keys().collect();
    let source = langs.first().map(|l| l.name.clone());
    let targets: Vec<String> = if langs.len() > 1 {
        langs.last().map(|l| vec![l.name.clone()]).unwrap_or_default()
    } else {
        Vec::new()
    };
    let meta_languages: Vec<&String> = names.iter().copied().filter(|n| !targets.contains(n)).collect();
    let run = serde_json::json!({
        "data": {
            "treebanks": treebanks,
            "stores": stores,
            "source": source,
            "meta_languages": meta_languages,
            "targets": targets,
        },
        "output_dir": ".",
    });
    let run_path = out.join("run.json");
    io::write_json(&run_path, &run)?;
    let spec_path = out.join("spec.json");
    io::write_json(&spec_path, spec)?;
    files.push(run_path);
    files.push(spec_path);
    Ok(files)
}
