use alloc::string::String;

/// What the kernel rejected. Every variant marks the transition invalid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelErrorKind {
    ParseError,
    NoMatch,
    BadPath,
    AlreadyClosed,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{kind:?}: {message}")]
pub struct KernelError {
    pub kind: KernelErrorKind,
    pub message: String,
}

impl KernelError {
    pub fn new(kind: KernelErrorKind, message: impl Into<String>) -> Self {
        KernelError { kind, message: message.into() }
    }
}

/// Precondition and numerical failures raised by search, curation and training.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("training diverged: final loss {final_loss} exceeds initial loss {initial_loss}")]
    Diverged { initial_loss: f64, final_loss: f64 },
    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
