use thiserror::Error;

use crate::trace::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid trace: {}", format_diagnostics(.0))]
    InvalidTrace(Vec<Diagnostic>),

    #[error("arithmetic overflow in 64-bit byte accumulator")]
    Overflow,

    #[error("processor count mismatch: {0} vs {1}")]
    ProcessorMismatch(usize, usize),

    #[error("oracle cap exceeded: {leaves} leaves (cap {cap})")]
    CapExceeded { leaves: usize, cap: usize },

    #[error("invalid antichain: {0}")]
    InvalidAntichain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("analyzer protocol violation: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
