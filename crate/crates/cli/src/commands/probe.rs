use std::collections::BTreeMap;
use std::path::PathBuf;

use protoalign_core::probe::{evaluate_accuracy, train_probe, EpochRecord, ProbeConfig};
use protoalign_core::rng::{derive_seed, key_tag};
use protoalign_core::treebank::{filter_rare_concepts, Split};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fmt_f64, load_probe, pool, probe_stem, PROBE_DIR};
use crate::bundle::{prototypes_to_bundle, Bundle};
use crate::config::RunConfig;
use crate::data::load_dataset;
use crate::error::{CliError, Result};
use crate::io;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetrics {
    pub seed: u64,
    pub best_epoch: usize,
    pub dev_accuracy: f64,
    /// Concepts dropped for having fewer than `min_count` training samples.
    pub excluded_concepts: Vec<String>,
    pub history: Vec<EpochRecord>,
}

/// Trains one probe per language that has train and dev splits.
pub fn probe_train(cfg: &RunConfig, jobs: usize) -> Result<Vec<PathBuf>> {
    let out = cfg.out_dir();
    let langs: Vec<String> = cfg
        .languages()
        .into_iter()
        .filter(|l| cfg.has_split(l, Split::Train) && cfg.has_split(l, Split::Dev))
        .collect();
    if langs.is_empty() {
        return Err(CliError::Config("no language has both train and dev splits".into()));
    }
    let mut inputs = Vec::with_capacity(langs.len());
    for l in &langs {
        inputs.push((l.clone(), load_dataset(cfg, l, Split::Train)?, load_dataset(cfg, l, Split::Dev)?));
    }
    let trained = pool(jobs)?.install(|| {
        inputs
            .par_iter()
            .map(|(lang, train, dev)| {
                let (kept, _) = filter_rare_concepts(train, cfg.probe.min_count);
                let excluded: Vec<String> = train
                    .vocab()
                    .names()
                    .iter()
                    .filter(|n| kept.vocab().index_of(n).is_none())
                    .cloned()
                    .collect();
                let pcfg = ProbeConfig {
                    seed: derive_seed(cfg.probe.seed, key_tag(lang)),
                    ..cfg.probe.clone()
                };
                let outcome = train_probe(&kept, dev, &pcfg)?;
                let best = &outcome.history[outcome.best_epoch - 1];
                let metrics = ProbeMetrics {
                    seed: pcfg.seed,
                    best_epoch: outcome.best_epoch,
                    dev_accuracy: best.dev_accuracy,
                    excluded_concepts: excluded,
                    history: outcome.history.clone(),
                };
                Ok((lang.clone(), outcome.prototypes, metrics))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut files = Vec::new();
    let mut all = BTreeMap::new();
    let mut csv = String::from("language,best_epoch,dev_accuracy\n");
    for (lang, ps, metrics) in trained {
        files.extend(prototypes_to_bundle(&ps).write(&probe_stem(&out, &lang))?);
        csv.push_str(&format!("{lang},{},{}\n", metrics.best_epoch, fmt_f64(metrics.dev_accuracy)));
        all.insert(lang, metrics);
    }
    let dir = out.join(PROBE_DIR);
    io::write_json(&dir.join("metrics.json"), &all)?;
    io::write_atomic(&dir.join("metrics.csv"), csv.as_bytes())?;
    files.push(dir.join("metrics.json"));
    files.push(dir.join("metrics.csv"));
    Ok(files)
}

/// Accuracy of every trained probe on its language's dev and test splits.
pub fn probe_eval(cfg: &RunConfig, jobs: usize) -> Result<Vec<PathBuf>> {
    let out = cfg.out_dir();
    let mut jobs_in = Vec::new();
    for lang in cfg.languages() {
        if !Bundle::exists(&probe_stem(&out, &lang)) {
            continue;
        }
        let ps = load_probe(&out, &lang)?;
        for split in [Split::Dev, Split::Test] {
            if cfg.has_split(&lang, split) {
                jobs_in.push((lang.clone(), split, ps.clone(), load_dataset(cfg, &lang, split)?));
            }
        }
    }
    if jobs_in.is_empty() {
        return Err(CliError::Data(format!(
            "no trained probe with a dev or test split under {}; run probe-train first",
            out.display()
        )));
    }
    let rows: Vec<(String, Split, f64)> = pool(jobs)?.install(|| {
        jobs_in
            .par_iter()
            .map(|(lang, split, ps, ds)| (lang.clone(), *split, evaluate_accuracy(ps, ds, cfg.evaluation.unseen)))
            .collect()
    });
    let mut csv = String::from("language,split,accuracy\n");
    let mut json: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (lang, split, acc) in &rows {
        let s = split_name(*split);
        csv.push_str(&format!("{lang},{s},{}\n", fmt_f64(*acc)));
        json.entry(lang.clone()).or_default().insert(s.to_string(), *acc);
    }
    let dir = out.join(PROBE_DIR);
    io::write_atomic(&dir.join("eval.csv"), csv.as_bytes())?;
    io::write_json(&dir.join("eval.json"), &json)?;
    Ok(vec![dir.join("eval.csv"), dir.join("eval.json")])
}

pub(crate) fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Dev => "dev",
        Split::Test => "test",
    }
}
