use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error("word `{0}` is not in the pronunciation dictionary")]
    OutOfVocabulary(String),

    #[error("unknown phoneme `{0}`")]
    UnknownPhoneme(String),

    #[error("speaker {speaker} has {count} utterances, fewer than the {folds} folds requested")]
    TooFewUtterances {
        speaker: u32,
        count: usize,
        folds: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("word correctness is undefined for an empty reference")]
    EmptyReference,

    #[error("cannot summarize an empty list of fold scores")]
    EmptyScores,

    #[error("confusion matrices are over different phoneme sets")]
    PhonemeSetMismatch,

    #[error("confusion matrix holds no counts")]
    EmptyConfusions,

    #[error("phoneme `{phoneme}` is not housed by map {map_id}")]
    Unhoused { phoneme: String, map_id: String },

    #[error("no HMM for unit `{0}`")]
    UnknownUnit(String),

    #[error("{frames} frames cannot traverse a chain of {states} emitting states")]
    TooShort { frames: usize, states: usize },

    #[error("mixture target {0} exceeds the five-component ceiling")]
    MixtureCeiling(usize),

    #[error("no hypothesis survived decoding")]
    NoHypothesis,

    #[error("leakage: utterance `{0}` appears in both training and test inputs")]
    Leakage(String),

    #[error("invalid experiment cell: {0}")]
    InvalidCell(String),

    #[error("missing experiment cell: {0}")]
    MissingCell(String),

    #[error("significance needs summaries over at least two folds")]
    DegenerateSummary,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        source_name: impl Into<String>,
        line: usize,
        msg: impl Into<String>,
    ) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            msg: msg.into(),
        }
    }
}
