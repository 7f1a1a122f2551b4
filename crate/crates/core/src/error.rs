use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Attaches the file the error came from.
    pub fn in_file(self, path: impl std::fmt::Display) -> Self {
        Error::InFile { path: path.to_string(), inner: Box::new(self) }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: coordinate out of range (lat {lat}, lon {lon})")]
    OutOfRange { line: u64, lat: f64, lon: f64 },

    #[error("line {line}: duplicate timestamp {timestamp} for person {person_id}")]
    DuplicateTimestamp {
        line: u64,
        person_id: String,
        timestamp: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("gap has no observed anchor: {0}")]
    NoAnchor(String),

    #[error("no feasible warping path: {0}")]
    Infeasible(String),

    #[error("reference collection is empty")]
    EmptyReferences,

    #[error("no feasible donor: {0}")]
    NoFeasibleDonor(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {inner}")]
    InFile { path: String, inner: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
