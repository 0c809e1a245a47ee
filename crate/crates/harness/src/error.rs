use std::path::PathBuf;

use thiserror::Error;
use tmc_core::estimators::EstimateError;
use tmc_core::factorgraph::GraphError;
use tmc_core::gradients::GradError;
use tmc_core::models::ModelError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    ConfigSyntax(#[from] toml::de::Error),
    #[error("config [{section}]: {message}")]
    Config { section: String, message: String },
    #[error("config [{section}]: unknown method {method:?}")]
    UnknownMethod { section: String, method: String },
    #[error("no output path: pass --out or set `out` in the config")]
    NoOutput,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv row {row}: {message}")]
    BadRecord { row: usize, message: String },
    #[error("widths must be at least 1")]
    BadWidth,
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(section: &str, message: impl Into<String>) -> Self {
        HarnessError::Config {
            section: section.to_owned(),
            message: message.into(),
        }
    }
}
