use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{what} not found: {}", path.display())]
    NotFound { what: &'static str, path: PathBuf },

    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Core(#[from] sfair::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use sfair::Error as E;
        match self {
            CliError::Usage(_) | CliError::NotFound { .. } | CliError::Write { .. } | CliError::Json { .. } => {
                EXIT_USAGE
            }
            CliError::Core(e) => match e {
                E::ShapeMismatch(_) => EXIT_MISMATCH,
                E::NoConvergence { .. } | E::UndefinedMetric(_) | E::Divergence { .. } => EXIT_NUMERIC,
                _ => EXIT_USAGE,
            },
        }
    }

    pub fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Write {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::from(sfair::Error::ShapeMismatch("x".into())).exit_code(), EXIT_MISMATCH);
        let div = sfair::Error::Divergence { epoch: 3, loss: f64::NAN };
        assert_eq!(CliError::from(div).exit_code(), EXIT_NUMERIC);
        assert_eq!(CliError::from(sfair::Error::MissingLabel(4)).exit_code(), EXIT_USAGE);
    }
}
