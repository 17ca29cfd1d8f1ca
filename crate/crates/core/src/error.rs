use thiserror::Error;

use crate::corpus::CorpusError;
use crate::eval::EvalError;
use crate::factuality::ScoreError;
use crate::parser::AnnotationError;
use crate::prior::PriorError;
use crate::synth::SynthError;
use crate::uq::UqError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Uq(#[from] UqError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
