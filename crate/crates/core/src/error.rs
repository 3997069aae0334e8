use std::path::PathBuf;

use thiserror::Error;

use crate::taxonomy::Axis;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the framework.
///
/// Configuration problems are kept apart from run failures so the CLI can map
/// them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown setting `{0}`")]
    UnknownSetting(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("method `{method}` (target `{target}`) is not applicable to `{setting}`: failing axes {}", join_axes(.axes))]
    Inapplicable {
        method: String,
        target: String,
        setting: String,
        axes: Vec<Axis>,
    },

    #[error("setting `{0}` is abstract and cannot be instantiated")]
    AbstractSetting(String),

    #[error("a method named `{0}` is already registered")]
    DuplicateMethod(String),

    #[error("malformed field `{field}`: {reason}")]
    MalformedField { field: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label {label} out of range for head [{start}, {end})")]
    LabelOutOfRange { label: usize, start: usize, end: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("environment error: {0}")]
    Env(String),

    #[error("method error: {0}")]
    Method(String),

    #[error("plugin error: {0}")]
    Plugin(String),

    #[error("dataset {path}: {reason}")]
    Dataset { path: PathBuf, reason: String },

    #[error("report error: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn malformed(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::MalformedField {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Stable code for configuration errors, `None` for everything else.
    pub fn config_code(&self) -> Option<&'static str> {
        match self {
            Error::UnknownSetting(_) => Some("E_UNKNOWN_SETTING"),
            Error::UnknownMethod(_) => Some("E_UNKNOWN_METHOD"),
            Error::Inapplicable { .. } => Some("E_INAPPLICABLE"),
            Error::AbstractSetting(_) => Some("E_ABSTRACT_SETTING"),
            Error::MalformedField { .. } => Some("E_MALFORMED_FIELD"),
            Error::DuplicateMethod(_) => Some("E_DUPLICATE_METHOD"),
            Error::Config(_) => Some("E_CONFIG"),
            Error::Dataset { .. } => Some("E_DATASET"),
            _ => None,
        }
    }

    pub fn is_config(&self) -> bool {
        self.config_code().is_some()
    }
}

fn join_axes(axes: &[Axis]) -> String {
    axes.iter()
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
