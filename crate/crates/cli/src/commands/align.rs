use std::collections::BTreeMap;
use std::path::PathBuf;

use protoalign_core::geometry::{alignability_report, AlignabilityReport, BaselineKind, Metric, TestMethod};
use rayon::prelude::*;

use super::{filtered_train, fmt_f64, load_probe, pool, ALIGN_DIR};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io;

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::Rsa => "rsa",
        Metric::Procrustes => "procrustes",
    }
}

/// Symmetric language x language matrix of one metric, 1 on the diagonal.
fn matrix_csv(langs: &[String], reports: &[AlignabilityReport], metric: Metric) -> String {
    let mut cell: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for r in reports {
        let v = r.observed(metric);
        cell.insert((&r.source, &r.target), v);
        cell.insert((&r.target, &r.source), v);
    }
    let mut s = String::from("language");
    for l in langs {
        s.push(',');
        s.push_str(l);
    }
    s.push('\n');
    for a in langs {
        s.push_str(a);
        for b in langs {
            s.push(',');
            if a == b {
                s.push('1');
            } else if let Some(v) = cell.get(&(a.as_str(), b.as_str())) {
                s.push_str(&fmt_f64(*v));
            }
        }
        s.push('\n');
    }
    s
}

/// Pairwise alignability of every language with a trained probe: RSA,
/// Procrustes EV and their Wilcoxon tests against the three baselines.
pub fn align(cfg: &RunConfig, jobs: usize) -> Result<Vec<PathBuf>> {
    let out = cfg.out_dir();
    let langs = cfg.languages();
    if langs.len() < 2 {
        return Err(CliError::Config("alignability needs at least two languages".into()));
    }
    let mut inputs = Vec::with_capacity(langs.len());
    for l in &langs {
        inputs.push((load_probe(&out, l)?, filtered_train(cfg, l)?));
    }
    let pairs: Vec<(usize, usize)> = (0..langs.len())
        .flat_map(|i| (i + 1..langs.len()).map(move |j| (i, j)))
        .collect();
    let reports = pool(jobs)?.install(|| {
        pairs
            .par_iter()
            .map(|&(i, j)| {
                let (ps1, _) = &inputs[i];
                let (ps2, ds2) = &inputs[j];
                alignability_report((&langs[i], &langs[j]), ps1, ps2, ds2, &cfg.geometry)
                    .map_err(|e| match CliError::from(e) {
                        CliError::Data(m) => CliError::Data(format!("{} / {}: {m}", langs[i], langs[j])),
                        other => other,
                    })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let dir = out.join(ALIGN_DIR);
    let mut tests = String::from("source,target,metric,baseline,observed,w,p_value,n_effective,method\n");
    for r in &reports {
        for kind in BaselineKind::ALL {
            for metric in [Metric::Rsa, Metric::Procrustes] {
                let c = r.comparison(kind, metric).expect("every baseline is evaluated");
                let method = match c.test.method {
                    TestMethod::Exact => "exact",
                    TestMethod::NormalApprox => "normal",
                };
                tests.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    r.source,
                    r.target,
                    metric_name(metric),
                    kind.code(),
                    fmt_f64(r.observed(metric)),
                    fmt_f64(c.test.w),
                    fmt_f64(c.test.p_value),
                    c.test.n_effective,
                    method
                ));
            }
        }
    }
    let files = vec![
        dir.join("reports.json"),
        dir.join("rsa.csv"),
        dir.join("procrustes.csv"),
        dir.join("tests.csv"),
    ];
    io::write_json(&files[0], &reports)?;
    io::write_atomic(&files[1], matrix_csv(&langs, &reports, Metric::Rsa).as_bytes())?;
    io::write_atomic(&files[2], matrix_csv(&langs, &reports, Metric::Procrustes).as_bytes())?;
    io::write_atomic(&files[3], tests.as_bytes())?;
    Ok(files)
}
