use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no sign change on bracket [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },

    #[error("no convergence after {iterations} iterations: {what}")]
    Convergence { what: String, iterations: usize },

    #[error("matrix is numerically singular: {0}")]
    SingularMatrix(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("calibration failed for flow {flow}: {reason}")]
    Calibration { flow: usize, reason: String },

    #[error("degenerate perturbation coefficient for flow {flow}: denominator {denominator:e}")]
    DegeneratePerturbation { flow: usize, denominator: f64 },

    #[error("budget calibration failed: {0}")]
    Budget(String),

    #[error("grid too large: {0}")]
    GridSize(String),

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Coarse class of the error: `config`, `io`, `numerical`,
    /// `calibration` or `grid`.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config { .. } | Error::Empty(_) => "config",
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => "io",
            Error::Domain(_)
            | Error::Bracket { .. }
            | Error::Convergence { .. }
            | Error::SingularMatrix(_)
            | Error::DegenerateGeometry(_) => "numerical",
            Error::Calibration { .. } | Error::DegeneratePerturbation { .. } | Error::Budget(_) => "calibration",
            Error::GridSize(_) => "grid",
        }
    }

    /// Process exit code for [`category`](Self::category); 2 is left to
    /// command-line usage errors.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 3,
            "io" => 4,
            "numerical" => 5,
            "calibration" => 6,
            _ => 7,
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
