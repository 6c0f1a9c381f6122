use chrono::NaiveDate;

/// Errors produced by any stage of the inference pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid kernel parameter: {0}")]
    KernelParam(String),

    #[error("empty series")]
    EmptySeries,

    #[error("series too short: need at least {need} days, got {got}")]
    SeriesTooShort { need: usize, got: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("fit diverged at iteration {iteration}: {detail}")]
    FitDiverged { iteration: usize, detail: String },

    #[error("scenario exploded at day {day}: incidence {value:.3e} exceeds ceiling {ceiling:.3e}")]
    ScenarioExploded { day: usize, value: f64, ceiling: f64 },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("{path}:{line}: {detail}")]
    CsvFormat { path: String, line: usize, detail: String },

    #[error("duplicate date {date} in {path}")]
    DuplicateDate { path: String, date: NaiveDate },

    #[error("no data rows in {0}")]
    NoData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no reproduction-number change detected at any grid value")]
    NoSelection,

    #[error("selection failed: {0}")]
    Selection(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {detail}")]
    Json { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Tags an error with the pipeline stage it surfaced in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
