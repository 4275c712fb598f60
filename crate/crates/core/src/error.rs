use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("symbol {symbol:?} is not in the alphabet {alphabet:?}")]
    InvalidSymbol { symbol: char, alphabet: Vec<char> },

    #[error("alphabet mismatch: {left:?} vs {right:?}")]
    AlphabetMismatch { left: Vec<char>, right: Vec<char> },

    #[error("grammar id {0} is outside 1..=7")]
    InvalidGrammar(u8),

    #[error("malformed automaton: {0}")]
    MalformedDfa(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("average edit distance undefined for grammar {grammar} at length {length}: no {empty} strings")]
    UndefinedDistance {
        grammar: u8,
        length: usize,
        empty: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training diverged at epoch {epoch}: loss is {loss} (learning rate too high?)")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("insufficient correctly-classified strings: found {found} of {wanted} {label} strings of length {length} after {attempts} attempts")]
    InsufficientSamples {
        label: &'static str,
        length: usize,
        wanted: usize,
        found: usize,
        attempts: u64,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
