//! Error type shared across the toolkit.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "degenerate trajectory segment ending at waypoint {index}: consecutive waypoints coincide"
    )]
    DegenerateSegment { index: usize },

    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    #[error("insufficient coverage: {0}")]
    Coverage(String),

    #[error("captures are not time-aligned: {0}")]
    Alignment(String),

    #[error("window needs exactly {expected} samples, got {got}")]
    WindowLength { expected: usize, got: usize },

    #[error("surveillance capture has not been clutter-cancelled")]
    UncleanedInput,

    #[error("CAF map carries no signal: all magnitudes are zero")]
    NoSignal,

    #[error("no instance holds a single detection; the Doppler track cannot be anchored")]
    UnrecoverableTrack,

    #[error("Doppler track instances are not contiguous at k = {at}")]
    NonContiguousTrack { at: usize },

    #[error("Doppler matrix is degenerate (condition number {condition_number:.3e})")]
    DegenerateGeometry { condition_number: f64 },

    #[error(
        "Doppler matrix became degenerate at instance {at_instance} \
         (condition number {condition_number:.3e})"
    )]
    DegenerateMidTrack {
        at_instance: usize,
        condition_number: f64,
        partial: Box<crate::tracking::TrackEstimate>,
    },

    #[error("bearings are within {separation_deg:.4} degrees of parallel; rays do not intersect")]
    NoIntersection { separation_deg: f64 },

    #[error("error report holds no instances")]
    EmptyReport,

    #[error("{}: payload truncated: expected {expected} bytes, found {got}", path.display())]
    TruncatedPayload {
        path: PathBuf,
        expected: u64,
        got: u64,
    },

    #[error("{}: unknown sample format tag {tag:?}", path.display())]
    UnknownFormatTag { path: PathBuf, tag: String },

    #[error("{}: header declares {header} samples but payload holds {payload}", path.display())]
    LengthMismatch {
        path: PathBuf,
        header: u64,
        payload: u64,
    },

    #[error("malformed {what} at {}: {detail}", path.display())]
    MalformedFile {
        path: PathBuf,
        what: &'static str,
        detail: String,
    },

    #[error("stage {stage} failed at instance {instance:?}: {source}")]
    Stage {
        stage: &'static str,
        instance: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            instance: None,
            source: Box::new(self),
        }
    }

    /// Wraps an error with the pipeline stage and detection instance it occurred in.
    pub fn at_instance(self, stage: &'static str, instance: usize) -> Self {
        Error::Stage {
            stage,
            instance: Some(instance),
            source: Box::new(self),
        }
    }

    /// True when the error stems from user-supplied configuration rather than a
    /// processing stage; the CLI maps this to a distinct exit code.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
