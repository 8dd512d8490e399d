use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unit index ({ix}, {iy}) out of range for layer {layer_id} ({width}x{height})")]
    Index {
        layer_id: u32,
        ix: i64,
        iy: i64,
        width: u32,
        height: u32,
    },

    /// Malformed FVOL1 payload. `layer` is the index of the layer being read
    /// when the problem was found, if any.
    #[error("format error{}: {message}", layer_suffix(.layer))]
    Format {
        layer: Option<usize>,
        message: String,
    },

    #[error("truncated payload{}: {message}", layer_suffix(.layer))]
    Truncated {
        layer: Option<usize>,
        message: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("rank-curve fit error: {0}")]
    Fit(String),

    #[error("brute-force refused: {configs} joint configurations exceed bound {bound}")]
    TooLarge { configs: u128, bound: u128 },

    #[error("aog document error: {0}")]
    Document(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn layer_suffix(layer: &Option<usize>) -> String {
    match layer {
        Some(l) => format!(" in layer {l}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
