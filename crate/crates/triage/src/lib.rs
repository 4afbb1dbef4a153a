//! Triage service: reviewers walk a patient's ranked trial candidates,
//! inspect clause-level match traces, and record select/reject decisions.
//!
//! The service only reads structured trials; structuring runs through the
//! command line. The one write endpoint appends feedback.

mod api;
mod store;

use std::path::PathBuf;

use thiserror::Error;

pub use api::{router, serve, ServerConfig};
pub use store::{
    CandidateView, FeedbackLabel, FeedbackRequest, PatientSummary, Provenance, StoreConfig, StructuredView,
    TriageStore, FEEDBACK_FILE, PATIENTS_FILE, PHI_GUARD_FILE, STRUCTURED_FILE, TRIALS_FILE,
};

#[derive(Error, Debug)]
pub enum TriageError {
    #[error("refusing to start: marker file {0} is missing from the data directory")]
    PhiGuardMissing(PathBuf),

    #[error("required input {0} is missing")]
    MissingInput(PathBuf),

    #[error("{0} appears more than once in {1}")]
    DuplicateId(String, &'static str),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot serve on {addr}: {source}")]
    Serve {
        addr: std::net::SocketAddr,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown patient {0}")]
    UnknownPatient(String),

    #[error("unknown trial {0}")]
    UnknownTrial(String),

    #[error("trial {0} has not been structured")]
    NotStructured(String),

    #[error("malformed request: {0}")]
    BadRequest(String),

    #[error("missing or invalid bearer token")]
    Unauthorized,

    #[error("worker task failed: {0}")]
    Task(String),
}

pub type TriageResult<T> = Result<T, TriageError>;
