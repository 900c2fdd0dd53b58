//! Cloud acquisition: endpoint catalog, credential handling, request
//! archiving and the acquisition workflows built on top.

mod acqlog;
mod acquire;
mod auth;
mod catalog;
mod client;
mod transport;

pub use acqlog::{sha256_hex, AcquisitionLog, LogEntry, BLOB_DIR, LOG_FILE};
pub use acquire::{
    acquire_media, acquire_voice_history, replay, sweep, AcquireOptions, AudioBlob, EndpointStatus, MediaItem, MediaReport,
    Outcome, SweepReport, VoiceHistory, VoiceRequestRecord,
};
pub use auth::{AuthState, CookieJar, Credential, ExchangeCounts, Issued};
pub use catalog::{
    auth_for_host, endpoint_catalog, AuthMethod, CsrfConfig, DeprecatedRoute, EndpointConfig, EndpointDescriptor,
    Lifetimes, Pagination, ParamLocation, ParamSpec, ResponseClass, TimelineHint, TokenExchange, Window,
    ENDPOINTS_JSON,
};
pub use client::{response_records, Page, Session, TOKEN_EXCHANGE_ID};
pub use transport::{HttpRequest, HttpResponse, HttpTransport, Transport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("no credential routing for host {0:?}")]
    Routing(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("refused: {0}")]
    Safety(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("{endpoint}: missing required parameter(s) {}", missing.join(", "))]
    Precondition { endpoint: String, missing: Vec<String> },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("refresh token rejected (HTTP {status}): {body}")]
    RefreshRejected { status: u16, body: String },
    #[error("{endpoint}: HTTP {status}: {body}")]
    Http { endpoint: String, status: u16, body: String },
    #[error("{endpoint}: CSRF check failed")]
    Csrf { endpoint: String },
    #[error("{endpoint}: unparseable response: {message}")]
    Parse { endpoint: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CloudError {
    /// HTTP status when the failure was a server answer.
    pub fn status(&self) -> Option<u16> {
        match self {
            CloudError::Http { status, .. } | CloudError::RefreshRejected { status, .. } => Some(*status),
            CloudError::Csrf { .. } => Some(403),
            _ => None,
        }
    }

    pub fn is_auth(&self) -> bool {
        matches!(self, CloudError::RefreshRejected { .. } | CloudError::Csrf { .. })
            || matches!(self.status(), Some(401 | 403))
    }
}
