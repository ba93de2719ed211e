//! Accuracy tables from `results.csv` files: one row per support size, one
//! column per language, then the average and the population standard
//! deviation across languages.
//!
//! Accuracies are fractions throughout; the markdown table shows them as
//! percentages with one decimal and the STD as a fraction with three.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use super::{fmt_f64, ResultRow};
use crate::config::hash_value;
use crate::error::{CliError, Result};
use crate::io;

pub const RESULTS_FILE: &str = "results.csv";
const HEADER: &str = "language,n_support,run,accuracy";

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub n_support: usize,
    /// Mean accuracy over runs per language.
    pub cells: BTreeMap<String, f64>,
    pub avg: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub languages: Vec<String>,
    pub rows: Vec<GridRow>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standard deviation with denominator `n`.
pub fn population_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn parse_results(text: &str, origin: &Path) -> Result<Vec<ResultRow>> {
    let bad = |line: usize, m: &str| CliError::Data(format!("{}:{line}: {m}", origin.display()));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == HEADER => {}
        _ => return Err(bad(1, &format!("expected header {HEADER:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 || f[0].is_empty() {
            return Err(bad(i + 1, "expected 4 fields"));
        }
        let n_support = f[1].parse().map_err(|_| bad(i + 1, "n_support is not an integer"))?;
        let run = f[2].parse().map_err(|_| bad(i + 1, "run is not an integer"))?;
        let accuracy: f64 = f[3].parse().map_err(|_| bad(i + 1, "accuracy is not a number"))?;
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(bad(i + 1, "accuracy must be a fraction in [0, 1]"));
        }
        rows.push(ResultRow {
            language: f[0].to_string(),
            n_support,
            run,
            accuracy,
        });
    }
    Ok(rows)
}

/// Averages runs per (N, language), then summarizes each N across languages.
pub fn aggregate(rows: &[ResultRow]) -> Result<Grid> {
    if rows.is_empty() {
        return Err(CliError::Data("no result rows to report".into()));
    }
    let mut by_n: BTreeMap<usize, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    let mut langs = BTreeSet::new();
    for r in rows {
        by_n.entry(r.n_support)
            .or_default()
            .entry(r.language.clone())
            .or_default()
            .push(r.accuracy);
        langs.insert(r.language.clone());
    }
    let rows = by_n
        .into_iter()
        .map(|(n_support, per)| {
            let cells: BTreeMap<String, f64> = per.into_iter().map(|(l, v)| (l, mean(&v))).collect();
            let vals: Vec<f64> = cells.values().copied().collect();
            GridRow {
                n_support,
                avg: mean(&vals),
                std: population_std(&vals),
                cells,
            }
        })
        .collect();
    Ok(Grid {
        languages: langs.into_iter().collect(),
        rows,
    })
}

pub fn render_markdown(g: &Grid) -> String {
    let mut s = String::from("| N |");
    for l in &g.languages {
        s.push_str(&format!(" {l} |"));
    }
    s.push_str(" AVG | STD |\n|---|");
    s.push_str(&"---:|".repeat(g.languages.len() + 2));
    s.push('\n');
    for r in &g.rows {
        s.push_str(&format!("| {} |", r.n_support));
        for l in &g.languages {
            match r.cells.get(l) {
                Some(v) => s.push_str(&format!(" {:.1} |", 100.0 * v)),
                None => s.push_str(" - |"),
            }
        }
        s.push_str(&format!(" {:.1} | {:.3} |\n", 100.0 * r.avg, r.std));
    }
    s
}

pub fn render_csv(g: &Grid) -> String {
    let mut s = String::from("n_support");
    for l in &g.languages {
        s.push(',');
        s.push_str(l);
    }
    s.push_str(",AVG,STD\n");
    for r in &g.rows {
        s.push_str(&r.n_support.to_string());
        for l in &g.languages {
            s.push(',');
            if let Some(v) = r.cells.get(l) {
                s.push_str(&fmt_f64(*v));
            }
        }
        s.push_str(&format!(",{},{}\n", fmt_f64(r.avg), fmt_f64(r.std)));
    }
    s
}

fn find_results(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| CliError::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_results(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == RESULTS_FILE) {
            found.push(p);
        }
    }
    Ok(())
}

/// Reads every `results.csv` below `input` and writes `report.md` and
/// `report.csv` into `out`. Nothing is written unless all inputs parse.
///
/// Also returns a digest of the rows read, which stands in for a config
/// hash: it depends on the results, not on where they live.
pub fn report(input: &Path, out: &Path) -> Result<(Vec<PathBuf>, String)> {
    if !input.is_dir() {
        return Err(CliError::Data(format!("{} is not a results directory", input.display())));
    }
    let mut found = Vec::new();
    find_results(input, &mut found)?;
    let mut rows = Vec::new();
    for p in &found {
        rows.extend(parse_results(&io::read_text(p)?, p)?);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("no {RESULTS_FILE} rows under {}", input.display())));
    }
    let digest = hash_value(&rows);
    let grid = aggregate(&rows)?;
    let md = render_markdown(&grid);
    let csv = render_csv(&grid);
    let files = vec![out.join("report.md"), out.join("report.csv")];
    io::write_atomic(&files[0], md.as_bytes())?;
    io::write_atomic(&files[1], csv.as_bytes())?;
    Ok((files, digest))
}
