use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How serious a scenario diagnostic is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// One finding from scenario validation, addressed by a dotted field path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    pub fn error(path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.path, self.message)
    }
}

fn join_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation failed: {}", join_diagnostics(.0))]
    Validation(Vec<Diagnostic>),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("negative transmit intensity {value} on LED {led}")]
    NonNegativity { led: usize, value: f64 },
    #[error("framing error: {0}")]
    Framing(String),
    #[error("CRC mismatch: frame carries {received:#06x}, payload hashes to {computed:#06x}")]
    Crc { received: u16, computed: u16 },
    #[error("rank deficient system: {0}")]
    Rank(String),
    #[error("pilot schedule error: {0}")]
    Schedule(String),
    #[error("channel estimate has no nonzero column")]
    DegenerateChannel,
    #[error("RSS out of range: {0}")]
    OutOfRange(String),
    #[error("circle centers are collinear; position is unresolved along the center line")]
    Collinear,
    #[error("only {usable} usable circles, need at least {needed}")]
    InsufficientCircles { usable: usize, needed: usize },
    #[error("empty sample set")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
