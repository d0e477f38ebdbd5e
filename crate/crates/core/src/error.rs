use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, widths, indices or hyperparameters that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// A non-finite value appeared while evaluating a primitive.
    #[error("numeric error in `{primitive}`{context}")]
    Numeric { primitive: String, context: String },

    #[error("parse error in {}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(primitive: impl Into<String>) -> Self {
        Error::Numeric {
            primitive: primitive.into(),
            context: String::new(),
        }
    }

    /// Attach a location (epoch, patient, ...) to a numeric error; other
    /// variants pass through untouched.
    pub fn with_context(self, ctx: impl AsRef<str>) -> Self {
        match self {
            Error::Numeric { primitive, context } => Error::Numeric {
                primitive,
                context: format!("{context} ({})", ctx.as_ref()),
            },
            other => other,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
