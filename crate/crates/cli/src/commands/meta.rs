use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use protoalign_core::metalearn::{
    evaluate_generalization, fewshot_adapt, icl_align_train, meta_train_fewshot, meta_train_zeroshot, AdaptConfig,
    ContextEpisodeSource, MetaMode, MetaModel,
};
use protoalign_core::rng::{derive_seed, key_tag, seeded};
use protoalign_core::treebank::{sample_support_query, Split};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{filtered_train, fmt_f64, load_probe, pool, META_DIR};
use crate::bundle::{adapter_to_bundle, bundle_to_model, model_to_bundle, Bundle};
use crate::config::RunConfig;
use crate::data::load_dataset;
use crate::error::{CliError, Result};
use crate::io;

fn model_stem(out: &Path) -> PathBuf {
    out.join(META_DIR).join("model")
}

fn load_model(out: &Path) -> Result<MetaModel> {
    let stem = model_stem(out);
    if !Bundle::exists(&stem) {
        return Err(CliError::Data(format!("no meta model under {}; run meta-train first", out.display())));
    }
    bundle_to_model(&Bundle::read(&stem)?)
}

/// Seed for one (language, support size) cell, independent of job order.
fn cell_seed(base: u64, lang: &str, n: usize) -> u64 {
    derive_seed(derive_seed(base, key_tag(lang)), n as u64)
}

/// Trains `f` (and `g` or `h`) on the meta-training languages in the
/// configured mode.
pub fn meta_train(cfg: &RunConfig, _jobs: usize) -> Result<Vec<PathBuf>> {
    let out = cfg.out_dir();
    let langs = cfg.meta_languages();
    if langs.is_empty() {
        return Err(CliError::Config("no meta-training languages".into()));
    }
    let (model, log) = match cfg.mode {
        MetaMode::Fewshot | MetaMode::Zeroshot => {
            let source = load_probe(&out, cfg.source()?)?;
            let mut datasets = BTreeMap::new();
            for l in &langs {
                datasets.insert(l.clone(), filtered_train(cfg, l)?);
            }
            if cfg.mode == MetaMode::Fewshot {
                meta_train_fewshot(&datasets, &source, &cfg.meta)?
            } else {
                meta_train_zeroshot(&datasets, &source, &cfg.meta)?
            }
        }
        MetaMode::IclAlign => {
            // demonstrations come from the dev split, queries from train
            let mut sources = Vec::with_capacity(langs.len());
            for l in &langs {
                if !cfg.has_split(l, Split::Dev) {
                    return Err(CliError::Config(format!("{l}: identity-prototype training needs a dev split")));
                }
                sources.push(ContextEpisodeSource {
                    language: l.clone(),
                    demo: load_dataset(cfg, l, Split::Dev)?,
                    queries: load_dataset(cfg, l, Split::Train)?,
                });
            }
            icl_align_train(&sources, &cfg.icl)?
        }
    };
    let mut files = model_to_bundle(&model).write(&model_stem(&out))?.to_vec();
    let log_path = out.join(META_DIR).join("train_log.json");
    io::write_json(&log_path, &log)?;
    files.push(log_path);
    Ok(files)
}

/// Fits a fresh adapter per target language and support size (few-shot
/// models only), drawing the support from the target's training split.
pub fn meta_adapt(cfg: &RunConfig, jobs: usize) -> Result<Vec<PathBuf>> {
    let out = cfg.out_dir();
    let model = load_model(&out)?;
    if model.mode != MetaMode::Fewshot {
        return Err(CliError::Config(format!("meta-adapt needs a few-shot model, found {:?}", model.mode)));
    }
    if cfg.data.targets.is_empty() {
        return Err(CliError::Config("data.targets is empty".into()));
    }
    if cfg.evaluation.n_support.contains(&0) {
        return Err(CliError::Config("few-shot adaptation needs n_support > 0".into()));
    }
    let mut cells = Vec::new();
    for t in &cfg.data.targets {
        let pool_ds = load_dataset(cfg, t, Split::Train)?;
        for &n in &cfg.evaluation.n_support {
            cells.push((t.clone(), n, pool_ds.clone()));
        }
    }
    let adapters = pool(jobs)?.install(|| {
        cells
            .par_iter()
            .map(|(t, n, pool_ds)| {
                let seed = cell_seed(cfg.evaluation.seed, t, *n);
                let ep = sample_support_query(pool_ds, *n, 0, &mut seeded(seed))?;
                let acfg = AdaptConfig {
                    seed: derive_seed(seed, cfg.adapt.seed),
                    ..cfg.adapt.clone()
                };
                Ok((t.clone(), *n, fewshot_adapt(&model, &ep.support, &acfg)?))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut files = Vec::new();
    for (t, n, g) in &adapters {
        let stem = out.join(META_DIR).join("adapters").join(format!("{t}.n{n}"));
        files.extend(adapter_to_bundle(t, *n, g).write(&stem)?);
    }
    Ok(files)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub language: String,
    pub n_support: usize,
    pub run: usize,
    pub accuracy: f64,
}

/// Accuracy on every target's test split for every support size and run.
pub fn meta_eval(cfg: &RunConfig, jobs: usize) -> Result<Vec<PathBuf>> {
    let out = cfg.out_dir();
    let model = load_model(&out)?;
    if cfg.data.targets.is_empty() {
        return Err(CliError::Config("data.targets is empty".into()));
    }
    // a zero-shot model ignores support, so only N = 0 is meaningful
    let sizes: Vec<usize> = if model.mode == MetaMode::Zeroshot {
        vec![0]
    } else {
        if cfg.evaluation.n_support.contains(&0) {
            return Err(CliError::Config(format!("{:?} evaluation needs n_support > 0", model.mode)));
        }
        cfg.evaluation.n_support.clone()
    };
    let mut cells = Vec::new();
    for t in &cfg.data.targets {
        let test = load_dataset(cfg, t, Split::Test)?;
        let support = if cfg.has_split(t, Split::Train) {
            Some(load_dataset(cfg, t, Split::Train)?)
        } else {
            None
        };
        for &n in &sizes {
            cells.push((t.clone(), n, test.clone(), support.clone()));
        }
    }
    let results = pool(jobs)?.install(|| {
        cells
            .par_iter()
            .map(|(t, n, test, support)| {
                let runs = evaluate_generalization(
                    &model,
                    test,
                    support.as_ref(),
                    *n,
                    cfg.evaluation.runs,
                    cell_seed(cfg.evaluation.seed, t, *n),
                    &cfg.adapt,
                    cfg.evaluation.unseen,
                )?;
                Ok(runs
                    .into_iter()
                    .map(|r| ResultRow {
                        language: t.clone(),
                        n_support: r.n_support,
                        run: r.run,
                        accuracy: r.accuracy,
                    })
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<ResultRow> = results.into_iter().flatten().collect();
    let mut csv = String::from("language,n_support,run,accuracy\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.language, r.n_support, r.run, fmt_f64(r.accuracy)));
    }
    let dir = out.join(META_DIR);
    io::write_atomic(&dir.join("results.csv"), csv.as_bytes())?;
    io::write_json(&dir.join("results.json"), &rows)?;
    Ok(vec![dir.join("results.csv"), dir.join("results.json")])
}
