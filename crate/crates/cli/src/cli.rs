//! Argument parsing and dispatch.

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::commands;
use crate::config::{hash_value, Overrides, RunConfig};
use crate::error::{CliError, Result};
use crate::manifest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    ProbeTrain,
    ProbeEval,
    Align,
    MetaTrain,
    MetaAdapt,
    MetaEval,
    Synth,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ProbeTrain => "probe-train",
            Command::ProbeEval => "probe-eval",
            Command::Align => "align",
            Command::MetaTrain => "meta-train",
            Command::MetaAdapt => "meta-adapt",
            Command::MetaEval => "meta-eval",
            Command::Synth => "synth",
            Command::Report => "report",
        }
    }
}

/// Prototype probing, cross-lingual alignability and meta-learned alignment.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
/// failure.
#[derive(Debug, Parser)]
#[command(name = "proto-align", version)]
pub struct Cli {
    pub command: Command,
    /// Run config (JSON). For `synth` a synthetic-data spec; for `report` a
    /// results directory or a run config whose output directory holds results.
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads for independent sub-jobs.
    #[arg(long, default_value_t = default_jobs())]
    pub jobs: usize,
    /// Replaces every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// What a finished command produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    if cli.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let (out, hash, files) = match cli.command {
        Command::Synth => {
            let spec = commands::load_spec(&cli.config, cli.seed)?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let files = commands::synth(&spec, &out)?;
            (out, hash_value(&spec), files)
        }
        Command::Report => {
            let input = report_input(&cli.config)?;
            let out = cli.out.clone().unwrap_or_else(|| input.clone());
            let (files, digest) = commands::report(&input, &out)?;
            (out, digest, files)
        }
        cmd => {
            let ov = Overrides {
                seed: cli.seed,
                out: cli.out.clone(),
            };
            let cfg = RunConfig::load(&cli.config, &ov)?;
            let files = match cmd {
                Command::ProbeTrain => commands::probe_train(&cfg, cli.jobs)?,
                Command::ProbeEval => commands::probe_eval(&cfg, cli.jobs)?,
                Command::Align => commands::align(&cfg, cli.jobs)?,
                Command::MetaTrain => commands::meta_train(&cfg, cli.jobs)?,
                Command::MetaAdapt => commands::meta_adapt(&cfg, cli.jobs)?,
                Command::MetaEval => commands::meta_eval(&cfg, cli.jobs)?,
                Command::Synth | Command::Report => unreachable!("handled above"),
            };
            (cfg.out_dir(), cfg.hash(), files)
        }
    };
    let manifest = manifest::record(&out, cli.command.name(), &hash, &files)?;
    Ok(Outcome {
        out_dir: out,
        files,
        manifest,
    })
}

/// A directory is used as is; a run config points at its output directory.
fn report_input(config: &Path) -> Result<PathBuf> {
    if config.is_dir() {
        return Ok(config.to_path_buf());
    }
    if config.is_file() {
        let text = crate::io::read_text(config)?;
        let base = config.parent().unwrap_or(Path::new("."));
        return Ok(RunConfig::from_json(&text, base)?.out_dir());
    }
    Err(CliError::Data(format!("{} does not exist", config.display())))
}
