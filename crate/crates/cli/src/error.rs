use std::path::{Path, PathBuf};

use protoalign_core::featurestore::StoreError;
use protoalign_core::geometry::GeometryError;
use protoalign_core::metalearn::MetaError;
use protoalign_core::probe::ProbeError;
use protoalign_core::synth::SpecError;
use protoalign_core::treebank::TreebankError;
use thiserror::Error;

/// Everything a command can fail with. The variant decides the exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 0 is success; 2 config, 3 data (including I/O), 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TreebankError> for CliError {
    fn from(e: TreebankError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::Config(_) => CliError::Config(e.to_string()),
            ProbeError::Data(_) => CliError::Data(e.to_string()),
            ProbeError::NonFinite(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::Degenerate | GeometryError::UndefinedCorrelation => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MetaError> for CliError {
    fn from(e: MetaError) -> Self {
        match e {
            MetaError::Config(_) | MetaError::Mode { .. } => CliError::Config(e.to_string()),
            MetaError::NonFinite(_) => CliError::Numeric(e.to_string()),
            MetaError::Geometry(g) => g.into(),
            MetaError::Data(_) | MetaError::UnknownLanguage(_) | MetaError::NoLanguages => CliError::Data(e.to_string()),
        }
    }
}
