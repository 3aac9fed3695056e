//! File formats, configuration, and command drivers for the `herosgan`
//! binary. Everything here is std-side plumbing around `herosgan-core`:
//! CSV signal files, checkpoint serialization, JSON run configs, and the
//! generate / train / enhance / evaluate / allan commands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod dataset;

/// Version string embedded in every output artifact.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Errors mapped onto process exit codes: 2 config, 3 data, 4 numeric.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Core errors surfacing mid-run concern the data being processed,
/// except numeric failures which keep their own exit code.
pub(crate) fn core_err(e: herosgan_core::Error) -> CliError {
    match e {
        herosgan_core::Error::Numeric(msg) => CliError::Numeric(msg),
        other => CliError::Data(other.to_string()),
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
