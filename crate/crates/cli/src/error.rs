use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input file not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("missing output of stage `{stage}`: {} (run `leolat {stage}` first)", .path.display())]
    MissingStage { stage: &'static str, path: PathBuf },
    #[error("{} was produced by a different configuration or seed; rerun `leolat {stage}`", .path.display())]
    StaleArtifact { stage: &'static str, path: PathBuf },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for absent or stale inputs, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput(_) | CliError::MissingStage { .. } | CliError::StaleArtifact { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
