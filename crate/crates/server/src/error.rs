//! Error bodies and the mapping from service error codes to HTTP status.

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use gatekeep_core::broker::BrokerError;
use gatekeep_core::gateway::GatewayError;
use gatekeep_core::registry::RegistryError;
use gatekeep_core::siem::SiemError;
use gatekeep_core::sshca::CaError;
use gatekeep_core::token::TokenError;

/// What every failed call returns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    /// Inner code for wrapped errors, e.g. the token error behind `TokenInvalid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

pub fn status_for(code: &str) -> StatusCode {
    match code {
        "Unauthenticated" | "UnknownSession" | "SessionExpired" | "SessionRevoked" | "BadAssertion"
        | "AssertionFromFuture" | "StaleAssertion" | "MfaRequired" | "UnregisteredIdentity" | "TokenInvalid"
        | "Malformed" | "BadSignature" | "NotYetValid" | "Expired" | "Revoked" | "AudienceMismatch"
        | "CertificateRejected" => StatusCode::UNAUTHORIZED,
        "Forbidden" | "NotAuthorized" | "AdminIdPRequired" | "KillSwitched" | "IdentitySuspended"
        | "NoMatchingAuthorization" | "RoleNotInvitable" | "NoActiveProjects" => StatusCode::FORBIDDEN,
        "NotFound" | "UnknownIdP" | "UnknownProject" | "UnknownToken" | "UnknownTarget" | "UnknownClient"
        | "UnknownHost" => StatusCode::NOT_FOUND,
        "AlreadyRegistered" | "PairAlreadyLinkedElsewhere" | "AlreadyConsumed" | "DuplicateCode" | "PathTaken"
        | "DuplicateInventory" | "NothingToRevoke" | "ProjectInactive" => StatusCode::CONFLICT,
        "InvitationExpired" => StatusCode::GONE,
        "RateLimited" => StatusCode::TOO_MANY_REQUESTS,
        "EndpointDown" => StatusCode::BAD_GATEWAY,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status_for(code),
            body: ErrorBody {
                error: code.to_owned(),
                message: message.into(),
                detail: None,
            },
        }
    }

    pub fn with_detail(mut self, detail: &str) -> Self {
        self.body.detail = Some(detail.to_owned());
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new("BadRequest", message)
    }

    pub fn unauthenticated() -> Self {
        ApiError::new("Unauthenticated", "authentication required")
    }

    pub fn forbidden() -> Self {
        ApiError::new("Forbidden", "forbidden")
    }

    pub fn not_found() -> Self {
        ApiError::new("NotFound", "not found")
    }

    pub fn code(&self) -> &str {
        &self.body.error
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<BrokerError> for ApiError {
    fn from(e: BrokerError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl From<TokenError> for ApiError {
    fn from(e: TokenError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl From<CaError> for ApiError {
    fn from(e: CaError) -> Self {
        let err = ApiError::new(e.code(), e.to_string());
        match &e {
            CaError::TokenInvalid(inner) => err.with_detail(inner.code()),
            _ => err,
        }
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let err = ApiError::new(e.code(), e.to_string());
        match &e {
            GatewayError::TokenInvalid(inner) => err.with_detail(inner.code()),
            GatewayError::CertificateRejected(reason) => err.with_detail(&format!("{reason:?}")),
            _ => err,
        }
    }
}

impl From<SiemError> for ApiError {
    fn from(e: SiemError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

/// `Json` with errors rendered as [`ErrorBody`].
#[derive(Debug, Clone, Copy, Default, axum::extract::FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
pub struct Body<T>(pub T);

/// `Query` with errors rendered as [`ErrorBody`].
#[derive(Debug, Clone, Copy, Default, axum::extract::FromRequestParts)]
#[from_request(via(axum::extract::Query), rejection(ApiError))]
pub struct Query<T>(pub T);

pub type ApiResult<T> = Result<T, ApiError>;
