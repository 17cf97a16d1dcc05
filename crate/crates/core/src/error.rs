use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {message}")]
    Ingest { path: PathBuf, message: String },

    #[error("invalid data{}: {message}", frame_suffix(*.frame_id))]
    Validation { frame_id: Option<u32>, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("no candidate hairstyle survived pruning ({0}); relax the prune_* ratios")]
    PruneEmpty(String),

    #[error("registration failed: {0}")]
    Registration(String),

    #[error("singular system: mesh component {component} has no fully confident vertex")]
    SingularSystem { component: usize },

    #[error("solver did not converge: relative residual {residual:e} exceeds {tolerance:e}")]
    Convergence { residual: f64, tolerance: f64 },

    #[error("strand correspondence: {0}")]
    Correspondence(String),

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn frame_suffix(frame_id: Option<u32>) -> String {
    match frame_id {
        Some(id) => format!(" in frame {id}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn ingest(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Ingest { path: path.into(), message: message.into() }
    }

    pub(crate) fn validation(frame_id: Option<u32>, message: impl Into<String>) -> Self {
        Error::Validation { frame_id, message: message.into() }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage { stage, source: Box::new(other) },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
