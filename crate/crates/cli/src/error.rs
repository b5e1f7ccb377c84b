//! Error classes and their process exit codes.

use std::fmt;

use scope_core::io::IoError;
use scope_core::sim::SimError;
use scope_core::subprompt::LlmError;
use scope_core::sweep::{FailureKind, SweepError};
use scope_core::{ScheduleError, TrajectoryError};

/// Process exit codes. The numbering is part of the command-line contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Failure = 1,
    Network = 2,
    Parse = 3,
    Precondition = 4,
    Schedule = 5,
    Blend = 6,
    Dimension = 7,
}

impl ExitKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    fn label(self) -> &'static str {
        match self {
            ExitKind::Failure => "error",
            ExitKind::Network => "network error",
            ExitKind::Parse => "parse error",
            ExitKind::Precondition => "precondition failed",
            ExitKind::Schedule => "schedule error",
            ExitKind::Blend => "blend error",
            ExitKind::Dimension => "dimension mismatch",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ExitKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn precondition(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Precondition, message)
    }

    /// Prefix the message with what was being attempted.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.label(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(ExitKind::Failure, e.to_string())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        Self::new(ExitKind::Failure, e.to_string())
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        let kind = match e {
            LlmError::Network { .. } | LlmError::Api { .. } => ExitKind::Network,
            LlmError::MalformedResponse(_)
            | LlmError::EmptyCompletion
            | LlmError::Parse(_)
            | LlmError::CountMismatch { .. } => ExitKind::Parse,
            LlmError::Precondition(_) | LlmError::MissingApiKey => ExitKind::Precondition,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<ScheduleError> for CliError {
    fn from(e: ScheduleError) -> Self {
        Self::new(ExitKind::Schedule, e.to_string())
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        let kind = match e {
            TrajectoryError::Blend { .. } => ExitKind::Blend,
            TrajectoryError::InvalidSchedule(_) | TrajectoryError::AnchorCountMismatch { .. } => {
                ExitKind::Schedule
            }
        };
        Self::new(kind, e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::DimensionMismatch(_) => Self::new(ExitKind::Dimension, e.to_string()),
            SimError::InvalidModel(_) => Self::new(ExitKind::Precondition, e.to_string()),
            SimError::Schedule(e) => e.into(),
            SimError::Trajectory(e) => e.into(),
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::EmptyGrid(_) => Self::precondition(e.to_string()),
            SweepError::Pool(_) => Self::new(ExitKind::Failure, e.to_string()),
            SweepError::Io(e) => e.into(),
        }
    }
}

impl From<FailureKind> for ExitKind {
    fn from(kind: FailureKind) -> Self {
        match kind {
            FailureKind::Schedule => ExitKind::Schedule,
            FailureKind::Blend => ExitKind::Blend,
            FailureKind::Io => ExitKind::Failure,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
