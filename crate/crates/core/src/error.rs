use std::fmt;

/// Shape rendered as `[a×b×c]` in error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeDisplay(pub Vec<usize>);

impl fmt::Display for ShapeDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "[{}]", parts.join("×"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {lhs} and {rhs}")]
    Shape {
        op: &'static str,
        lhs: ShapeDisplay,
        rhs: ShapeDisplay,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("generation error: {0}")]
    Generation(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: ShapeDisplay(lhs.to_vec()),
            rhs: ShapeDisplay(rhs.to_vec()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
