use std::process::ExitCode;

use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("LoginTimeout: no approval arrived in time")]
    LoginTimeout,
    #[error("BrokerUnreachable: {0}")]
    BrokerUnreachable(String),
    #[error("SessionExpired: no valid session; run `gatekeep login`")]
    SessionExpired,
    /// An error body returned by the service, shown as-is.
    #[error("{code}: {message}")]
    Server { status: u16, code: String, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("unexpected response: {0}")]
    Protocol(String),
}

/// Error body as the services send it.
#[derive(Debug, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default)]
    pub message: String,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::LoginTimeout => 2,
            CliError::BrokerUnreachable(_) => 3,
            CliError::SessionExpired => 4,
            CliError::Server { status: 401, .. } => 4,
            CliError::Server { status: 403, .. } => 5,
            _ => 1,
        }
    }

    pub fn code(&self) -> &str {
        match self {
            CliError::LoginTimeout => "LoginTimeout",
            CliError::BrokerUnreachable(_) => "BrokerUnreachable",
            CliError::SessionExpired => "SessionExpired",
            CliError::Server { code, .. } => code,
            CliError::Config(_) => "Config",
            CliError::Usage(_) => "Usage",
            CliError::Io(_) => "Io",
            CliError::Protocol(_) => "Protocol",
        }
    }
}

impl From<CliError> for ExitCode {
    fn from(e: CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}
