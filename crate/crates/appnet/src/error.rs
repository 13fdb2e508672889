use appnet_core::{ChainError, IllegalTransition, RegistryError, Violation};
use serde::Serialize;
use thiserror::Error;

use crate::store::StoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors of the market and runtime services. Each maps to a stable
/// kebab-case code and an HTTP status.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("invalid intent: {}", join(.0))]
    InvalidIntent(Vec<Violation>),
    #[error("invalid application: {0}")]
    InvalidApplication(String),
    #[error("provider {provider} already has an app named {display_name}")]
    DuplicateApp {
        provider: String,
        display_name: String,
    },
    #[error("authentication failed")]
    AuthFailure,
    #[error("unknown app {0}")]
    UnknownApp(String),
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("user {0} already exists")]
    DuplicateUser(String),
    #[error("invalid user name {0:?}")]
    InvalidUserName(String),
    #[error("app {0} is already installed")]
    AlreadyInstalled(String),
    #[error("app {0} is not installed")]
    NotInstalled(String),
    #[error("invalid grant")]
    InvalidGrant,
    #[error("unknown connection {0}")]
    UnknownConnection(String),
    #[error(transparent)]
    IllegalTransition(#[from] IllegalTransition),
    #[error(
        "no adapter chain of length <= {max_len} from {message} to a message {consumer} handles"
    )]
    Incompatible {
        message: String,
        consumer: String,
        max_len: usize,
    },
    #[error("a live connection for this tuple already exists: {0}")]
    DuplicateConnection(String),
    #[error("{app} does not fire {message}")]
    NotAFiredMessage { app: String, message: String },
    #[error("invalid token")]
    InvalidToken,
    #[error("expired token")]
    ExpiredToken,
    #[error("unknown communication id")]
    UnknownComm,
    #[error("not found")]
    NotFound,
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidRequest(_) => "invalid-request",
            Error::Registry(e) => match e {
                RegistryError::InvalidName(_) | RegistryError::InvalidSchema(_) => "invalid-schema",
                RegistryError::NameConflict(_) => "name-conflict",
                RegistryError::UnknownMessage(_) => "unknown-message",
                RegistryError::InvalidAdapter { .. } => "invalid-adapter",
                RegistryError::DuplicateAdapter(_) => "duplicate",
                RegistryError::Chain(ChainError::UnknownAdapter(_)) => "unknown-adapter",
                RegistryError::Chain(ChainError::Broken { .. }) => "broken-chain",
                RegistryError::Chain(ChainError::NonconformingInput(_)) => "nonconforming-input",
            },
            Error::InvalidIntent(_) => "invalid-intent",
            Error::InvalidApplication(_) => "invalid-application",
            Error::DuplicateApp { .. } => "duplicate-display-name",
            Error::AuthFailure => "auth-failure",
            Error::UnknownApp(_) => "unknown-app",
            Error::UnknownUser(_) => "unknown-user",
            Error::DuplicateUser(_) => "duplicate",
            Error::InvalidUserName(_) => "invalid-request",
            Error::AlreadyInstalled(_) => "already-installed",
            Error::NotInstalled(_) => "not-installed",
            Error::InvalidGrant => "invalid-grant",
            Error::UnknownConnection(_) => "unknown-connection",
            Error::IllegalTransition(_) => "illegal-transition",
            Error::Incompatible { .. } => "incompatible",
            Error::DuplicateConnection(_) => "duplicate",
            Error::NotAFiredMessage { .. } => "not-a-fired-message",
            Error::InvalidToken => "invalid-token",
            Error::ExpiredToken => "expired-token",
            Error::UnknownComm => "unknown-comm-id",
            Error::NotFound => "not-found",
            Error::Store(StoreError::Conflict { .. }) => "conflict",
            Error::Store(_) => "store-failure",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            Error::AuthFailure | Error::InvalidToken | Error::ExpiredToken => 401,
            Error::UnknownApp(_)
            | Error::UnknownUser(_)
            | Error::UnknownConnection(_)
            | Error::UnknownComm
            | Error::NotFound => 404,
            Error::Registry(RegistryError::UnknownMessage(_))
            | Error::Registry(RegistryError::Chain(ChainError::UnknownAdapter(_))) => 404,
            Error::Registry(RegistryError::NameConflict(_))
            | Error::Registry(RegistryError::DuplicateAdapter(_))
            | Error::DuplicateApp { .. }
            | Error::DuplicateUser(_)
            | Error::AlreadyInstalled(_)
            | Error::NotInstalled(_)
            | Error::IllegalTransition(_)
            | Error::Incompatible { .. }
            | Error::DuplicateConnection(_)
            | Error::Store(StoreError::Conflict { .. }) => 409,
            Error::Store(_) => 500,
            _ => 400,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            error: self.code().to_string(),
            detail: self.to_string(),
        }
    }
}

/// Wire form of an error: `{"error": code, "detail": text}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}
