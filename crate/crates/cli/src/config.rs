//! Run configuration: one JSON document per experiment.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Validation runs before any computation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use protoalign_core::featurestore::fnv1a64;
use protoalign_core::geometry::ReportConfig;
use protoalign_core::metalearn::{AdaptConfig, IclAlignConfig, MetaConfig, MetaMode};
use protoalign_core::probe::{ProbeConfig, UnseenPolicy};
use protoalign_core::treebank::{RootArcs, Split, Task};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io;

/// Treebank and feature-store files per language and split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub treebanks: BTreeMap<String, BTreeMap<Split, PathBuf>>,
    pub stores: BTreeMap<String, BTreeMap<Split, PathBuf>>,
    /// Language whose probe supplies the frozen source prototypes.
    pub source: Option<String>,
    /// Languages used for meta-training; empty means all but the targets.
    pub meta_languages: Vec<String>,
    /// Languages evaluated by `meta-adapt` and `meta-eval`.
    pub targets: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Support sizes in sentences; 0 is only meaningful for zero-shot models.
    pub n_support: Vec<usize>,
    pub runs: usize,
    pub seed: u64,
    pub unseen: UnseenPolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_support: vec![10, 50],
            runs: 5,
            seed: 0,
            unseen: UnseenPolicy::Misclassified,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_task() -> Task {
    Task::Pos
}

fn default_mode() -> MetaMode {
    MetaMode::Fewshot
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_task")]
    pub task: Task,
    #[serde(default)]
    pub root_arcs: RootArcs,
    pub data: DataConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default = "default_mode")]
    pub mode: MetaMode,
    #[serde(default)]
    pub meta: MetaConfig,
    #[serde(default)]
    pub icl: IclAlignConfig,
    #[serde(default)]
    pub adapt: AdaptConfig,
    #[serde(default)]
    pub geometry: ReportConfig,
    #[serde(default)]
    pub evaluation: EvalConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path, ov: &Overrides) -> Result<Self> {
        let text = io::read_text(path).map_err(|e| CliError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_json(&text, base)?;
        cfg.apply(ov);
        cfg.validate()?;
        Ok(cfg)
    }

    /// `--seed` replaces every component seed; `--out` the output directory.
    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(s) = ov.seed {
            self.probe.seed = s;
            self.meta.seed = s;
            self.icl.seed = s;
            self.adapt.seed = s;
            self.geometry.seed = s;
            self.evaluation.seed = s;
        }
        if let Some(out) = &ov.out {
            self.output_dir = out.clone();
            // an explicit --out is taken relative to the working directory
            if out.is_relative() {
                self.output_dir = std::env::current_dir().map(|d| d.join(out)).unwrap_or_else(|_| out.clone());
            }
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        // drops interior "." so "./run.json" with output_dir "." names the
        // config's own directory
        self.resolve(&self.output_dir).components().collect()
    }

    pub fn languages(&self) -> Vec<String> {
        self.data.treebanks.keys().cloned().collect()
    }

    pub fn has_split(&self, lang: &str, split: Split) -> bool {
        self.data.treebanks.get(lang).is_some_and(|m| m.contains_key(&split))
    }

    pub fn split_paths(&self, lang: &str, split: Split) -> Result<(PathBuf, PathBuf)> {
        let get = |m: &BTreeMap<String, BTreeMap<Split, PathBuf>>, what: &str| {
            m.get(lang)
                .and_then(|s| s.get(&split))
                .map(|p| self.resolve(p))
                .ok_or_else(|| CliError::Config(format!("no {what} for {lang} {split:?}")))
        };
        Ok((get(&self.data.treebanks, "treebank")?, get(&self.data.stores, "store")?))
    }

    pub fn source(&self) -> Result<&str> {
        self.data
            .source
            .as_deref()
            .ok_or_else(|| CliError::Config("data.source is required for this command".into()))
    }

    /// Meta-training languages: the explicit list, or every language that is
    /// not a target.
    pub fn meta_languages(&self) -> Vec<String> {
        if self.data.meta_languages.is_empty() {
            self.languages()
                .into_iter()
                .filter(|l| !self.data.targets.contains(l))
                .collect()
        } else {
            self.data.meta_languages.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        self.probe.validate()?;
        self.meta.validate()?;
        self.icl.validate()?;
        self.adapt.validate()?;
        if self.geometry.n_trials == 0 {
            return bad("geometry.n_trials must be positive".into());
        }
        if self.evaluation.runs == 0 || self.evaluation.n_support.is_empty() {
            return bad("evaluation needs at least one run and one support size".into());
        }
        if self.mode != MetaMode::IclAlign && self.meta.m != self.probe.m {
            return bad(format!("meta.m = {} must equal probe.m = {}", self.meta.m, self.probe.m));
        }
        if self.data.treebanks.is_empty() {
            return bad("data.treebanks is empty".into());
        }
        let tb_keys: Vec<_> = self.data.treebanks.iter().map(|(l, s)| (l, s.keys().collect::<Vec<_>>())).collect();
        let st_keys: Vec<_> = self.data.stores.iter().map(|(l, s)| (l, s.keys().collect::<Vec<_>>())).collect();
        if tb_keys != st_keys {
            return bad("data.treebanks and data.stores must list the same languages and splits".into());
        }
        for (lang, splits) in self.data.treebanks.iter().chain(&self.data.stores) {
            for p in splits.values() {
                let p = self.resolve(p);
                if !p.is_file() {
                    return bad(format!("{lang}: {} does not exist", p.display()));
                }
            }
        }
        let known = |l: &String, what: &str| {
            if self.data.treebanks.contains_key(l) {
                Ok(())
            } else {
                Err(CliError::Config(format!("{what} language {l:?} has no data")))
            }
        };
        if let Some(s) = &self.data.source {
            known(s, "source")?;
        }
        for l in &self.data.meta_languages {
            known(l, "meta")?;
        }
        for l in &self.data.targets {
            known(l, "target")?;
        }
        Ok(())
    }

    /// FNV-1a 64 over the canonical JSON of the effective configuration,
    /// output directory excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("serializable");
        if let Some(o) = v.as_object_mut() {
            o.remove("output_dir");
        }
        format!("{:016x}", fnv1a64(&serde_json::to_vec(&v).expect("serializable")))
    }
}

/// Hash of any serializable config (used for the synthetic spec).
pub fn hash_value<T: Serialize>(v: &T) -> String {
    format!("{:016x}", fnv1a64(&serde_json::to_vec(v).expect("serializable")))
}
