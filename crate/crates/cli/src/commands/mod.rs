//! One module per subcommand. Every command returns the files it wrote so
//! the caller can record them in `manifest.json`.

mod align;
mod meta;
mod probe;
mod report;
mod synth;

use std::path::{Path, PathBuf};

pub use align::align;
pub use meta::{meta_adapt, meta_eval, meta_train, ResultRow};
pub use probe::{probe_eval, probe_train};
pub use report::{aggregate, parse_results, population_std, render_csv, render_markdown, report, Grid, GridRow};
pub use synth::{load_spec, synth};

use protoalign_core::probe::PrototypeSet;
use protoalign_core::treebank::{filter_rare_concepts, LabeledDataset, Split};

use crate::bundle::{bundle_to_prototypes, Bundle};
use crate::config::RunConfig;
use crate::data::load_dataset;
use crate::error::{CliError, Result};

pub const PROBE_DIR: &str = "probes";
pub const ALIGN_DIR: &str = "align";
pub const META_DIR: &str = "meta";

/// Bounded worker pool for independent sub-jobs. Results are collected in
/// input order, so output never depends on scheduling.
pub fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} workers: {e}")))
}

pub(crate) fn probe_stem(out: &Path, lang: &str) -> PathBuf {
    out.join(PROBE_DIR).join(lang)
}

pub(crate) fn load_probe(out: &Path, lang: &str) -> Result<PrototypeSet> {
    let stem = probe_stem(out, lang);
    let b = Bundle::read(&stem).map_err(|e| match e {
        CliError::Io { .. } => CliError::Data(format!("no probe for {lang} under {}; run probe-train first", out.display())),
        e => e,
    })?;
    bundle_to_prototypes(&b)
}

/// Training split with rare concepts removed.
pub(crate) fn filtered_train(cfg: &RunConfig, lang: &str) -> Result<LabeledDataset> {
    let ds = load_dataset(cfg, lang, Split::Train)?;
    Ok(filter_rare_concepts(&ds, cfg.probe.min_count).0)
}

/// Shortest round-trip decimal form; stable across runs and platforms.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
