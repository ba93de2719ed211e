#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use proto_align::{run, Cli, CliError, Command, Outcome};
use protoalign_core::synth::SyntheticSpec;
use serde_json::{json, Value};

pub fn exec(command: Command, config: &Path, out: Option<&Path>, jobs: usize) -> Result<Outcome, CliError> {
    run(&Cli {
        command,
        config: config.to_path_buf(),
        jobs,
        seed: None,
        out: out.map(Path::to_path_buf),
    })
}

pub fn exec_ok(command: Command, config: &Path, jobs: usize) -> Outcome {
    exec(command, config, None, jobs).unwrap_or_else(|e| panic!("{}: {e}", command.name()))
}

/// Writes `spec` into `dir`, runs `synth` there and returns the generated
/// run config.
pub fn synthesize(dir: &Path, spec: &SyntheticSpec) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let spec_path = dir.join("input-spec.json");
    std::fs::write(&spec_path, serde_json::to_vec(spec).unwrap()).unwrap();
    exec(Command::Synth, &spec_path, Some(dir), 1).expect("synth");
    dir.join("run.json")
}

/// Merges `patch` into the run config at `path`, one level deep.
pub fn patch(path: &Path, patch: Value) {
    let mut cfg: Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    for (k, v) in patch.as_object().unwrap() {
        match (cfg.get_mut(k), v) {
            (Some(Value::Object(dst)), Value::Object(src)) => {
                for (kk, vv) in src {
                    dst.insert(kk.clone(), vv.clone());
                }
            }
            _ => {
                cfg[k] = v.clone();
            }
        }
    }
    std::fs::write(path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
}

/// A few seconds of work end to end.
pub fn tiny_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        k: 5,
        n: 8,
        n_languages: 3,
        sentences_per_language: 120,
        tokens_per_sentence: 6,
        seed,
        ..Default::default()
    }
}

pub fn tiny_settings() -> Value {
    json!({
        "probe": {"m": 4, "epochs": 3, "min_count": 5},
        "meta": {"h": 16, "m": 4, "epochs": 2, "episodes_per_language_per_epoch": 3, "n_query": 5, "support_sizes": [3, 5]},
        "icl": {"hidden": 16, "epochs": 2, "episodes_per_language_per_epoch": 3, "n_query": 5},
        "adapt": {"epochs": 3},
        "geometry": {"n_trials": 20},
        "evaluation": {"n_support": [3, 5], "runs": 2}
    })
}

/// Every file below `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                acc.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(dir, dir, &mut acc);
    acc
}
