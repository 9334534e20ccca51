//! Front end for the `mrm` binary: configuration, subcommands and the
//! structured log.

pub mod commands;
pub mod config;
pub mod log;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mrm_core::Error),
}
