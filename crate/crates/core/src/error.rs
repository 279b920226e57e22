use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("duplicate sample for scenario {id} at t = {t}")]
    DuplicateSample { id: String, t: f64 },
    #[error("scenario {id}: weight must be constant within a scenario")]
    InconsistentWeight { id: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("scenario {id} rejected: {reasons}")]
    InvalidScenario { id: String, reasons: String },
    #[error("metric extraction failed for scenario {id}: {source}")]
    Extraction {
        id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("parameter outside its legal region: {0}")]
    ParameterDomain(String),
    #[error("data outside model support: {0}")]
    Support(String),
    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("degenerate region: {0}")]
    DegenerateRegion(String),
    #[error("reference tail mass below 1e-12 at paired draw {draw}")]
    RatioOverflow { draw: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing upstream artifact {}", path.display())]
    MissingArtifact { path: PathBuf },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
