use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("ragged tensor: {0}")]
    Ragged(String),
    #[error("non-finite value at {0}")]
    NonFinite(String),
    #[error("log transform domain error: value {value} + offset {offset} is not positive")]
    LogDomain { value: f64, offset: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("degenerate empirical matrix: diagonal entry {index} is {value}")]
    DegenerateScatter { index: usize, value: f64 },
    #[error("{solver} did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("proximal gradient diverged at sweep {sweep}; reduce the step size")]
    Diverged { sweep: usize },
    #[error("component {component} degenerated: soft count {soft_count} below floor {floor}")]
    Degenerate {
        component: usize,
        soft_count: f64,
        floor: f64,
    },
    #[error("every grid cell failed: {0}")]
    AllCellsFailed(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Errors that come from the data rather than from numerics or usage.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse(_)
                | Error::Ragged(_)
                | Error::NonFinite(_)
                | Error::LogDomain { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(source) => Error::Io {
                    path: "<csv stream>".into(),
                    source,
                },
                _ => unreachable!(),
            }
        } else {
            Error::Parse(e.to_string())
        }
    }
}
