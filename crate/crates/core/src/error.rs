use thiserror::Error;

use crate::synthgen::Group;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SandboxError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty cell: no rows with group {group} and label {label}")]
    EmptyCell { group: Group, label: u8 },

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("intervention not applicable: {0}")]
    NotApplicable(String),

    #[error("only one group present; correlation removal needs both")]
    SingleGroup,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,
}

impl SandboxError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        SandboxError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures that mean "this run cannot use the intervention"
    /// rather than a programming or configuration error.
    pub fn is_precondition_failure(&self) -> bool {
        matches!(
            self,
            SandboxError::EmptyCell { .. }
                | SandboxError::DegenerateData(_)
                | SandboxError::NotApplicable(_)
                | SandboxError::SingleGroup
                | SandboxError::EmptyInput
        )
    }
}

pub type Result<T> = std::result::Result<T, SandboxError>;
