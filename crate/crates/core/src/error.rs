//! Error types shared across the extraction pipeline.

use thiserror::Error;

/// Errors from waveform-level power computations.
#[derive(Debug, Error)]
pub enum PowerCalcError {
    #[error("invalid waveform frame: {0}")]
    InvalidFrame(String),
    #[error("no reference voltage (voltage fundamental is zero)")]
    NoReferenceVoltage,
    #[error("undefined THD (fundamental current is zero)")]
    UndefinedThd,
}

/// Errors from recording ingestion and serialization.
#[derive(Debug, Error)]
pub enum MeterDataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: non-1Hz cadence (uniform {delta}-second spacing)")]
    NonUnitCadence { line: usize, delta: u64 },
    #[error("line {line}: duplicate timestamp {t} on phase {phase}")]
    DuplicateTimestamp { line: usize, t: u64, phase: String },
    #[error("line {line}: out-of-order timestamp {t} on phase {phase}")]
    OutOfOrder { line: usize, t: u64, phase: String },
    #[error("line {line}: negative aggregate power {value}")]
    NegativePower { line: usize, value: f64 },
    #[error("empty recording")]
    Empty,
    #[error("bad waveform container: {0}")]
    BadContainer(String),
    #[error(transparent)]
    PowerCalc(#[from] PowerCalcError),
}

/// Errors from edge detection.
#[derive(Debug, Error)]
pub enum EventDetectError {
    #[error("recording too short ({span} s, need at least {need} s)")]
    RecordingTooShort { span: u64, need: u64 },
    #[error("invalid detection parameters: {0}")]
    InvalidParams(String),
}

/// Errors from event filtration.
#[derive(Debug, Error)]
pub enum FiltrationError {
    #[error("empty search domain for appliance {0}")]
    EmptySearchDomain(String),
    #[error("invalid condition row {appliance}: {reason}")]
    InvalidRow { appliance: String, reason: String },
    #[error("condition table parse error: {0}")]
    TableParse(String),
}

/// Errors from event clustering. Variants that interrupt an in-progress
/// clustering carry the partial result so callers can inspect it.
#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error("mean-shift did not converge after {max_iter} iterations")]
    NoConvergence {
        max_iter: usize,
        partial: Vec<Vec<usize>>,
    },
    #[error("weight-based clustering still updating after {max_iter} passes")]
    Oscillation {
        max_iter: usize,
        partial: Vec<Vec<usize>>,
    },
    #[error("no clusters to select from")]
    NoClusters,
    #[error("insufficient authentic events (dominant cluster has {size}, need {min_size})")]
    InsufficientAuthentic { size: usize, min_size: usize },
    #[error("invalid clustering parameters: {0}")]
    InvalidParams(String),
}

/// Errors from scenario configuration and synthesis.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario config error at {path}: {reason}")]
    Config { path: String, reason: String },
    #[error("scenario parse error: {0}")]
    Parse(String),
}

/// Top-level pipeline error.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    MeterData(#[from] MeterDataError),
    #[error(transparent)]
    EventDetect(#[from] EventDetectError),
    #[error(transparent)]
    Filtration(#[from] FiltrationError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("database format error: {0}")]
    Database(String),
}
