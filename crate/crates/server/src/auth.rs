//! Credentials carried in `Authorization: Bearer`.
//!
//! Session endpoints take a broker session id, or a `portal` access token
//! minted from one. Token endpoints take a signed access token for their own
//! audience. Nothing is read from cookies.

use axum::extract::FromRequestParts;
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;

use gatekeep_core::broker::AuthSession;
use gatekeep_core::registry::Role;

use crate::error::ApiError;
use crate::request::RequestId;
use crate::AppState;

pub const PORTAL_AUDIENCE: &str = "portal";

pub fn bearer(parts: &Parts) -> Option<String> {
    let value = parts.headers.get(AUTHORIZATION)?.to_str().ok()?;
    let (scheme, rest) = value.split_once(' ')?;
    let rest = rest.trim();
    (scheme.eq_ignore_ascii_case("bearer") && !rest.is_empty()).then(|| rest.to_owned())
}

fn looks_like_token(bearer: &str) -> bool {
    bearer.bytes().filter(|&b| b == b'.').count() == 2
}

/// A live broker session, named either by its id or by a `portal` token
/// issued from it.
#[derive(Debug, Clone)]
pub struct Caller(pub AuthSession);

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let value = bearer(parts).ok_or_else(ApiError::unauthenticated)?;
        if !looks_like_token(&value) {
            return Ok(Caller(state.platform.broker.check_session(&value)?));
        }
        let Ok(rid) = RequestId::from_request_parts(parts, state).await;
        let claims = rid.scope(|| state.platform.tokens.validate_token(&value, PORTAL_AUDIENCE))?;
        let session = state.platform.broker.check_session(&claims.sid)?;
        if session.persistent_id != claims.sub {
            return Err(ApiError::unauthenticated());
        }
        Ok(Caller(session))
    }
}

/// A bare session id. Minting tokens needs this so one token cannot be
/// traded for another.
#[derive(Debug, Clone)]
pub struct SessionCaller(pub AuthSession);

impl FromRequestParts<AppState> for SessionCaller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let sid = bearer(parts).ok_or_else(ApiError::unauthenticated)?;
        if looks_like_token(&sid) {
            return Err(ApiError::unauthenticated());
        }
        Ok(SessionCaller(state.platform.broker.check_session(&sid)?))
    }
}

/// A live session whose holder currently has the admin role.
#[derive(Debug, Clone)]
pub struct AdminCaller(pub AuthSession);

impl FromRequestParts<AppState> for AdminCaller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let Caller(session) = Caller::from_request_parts(parts, state).await?;
        if !state.platform.registry.authorizations_for(&session.persistent_id).has_role(Role::Admin) {
            return Err(ApiError::forbidden());
        }
        Ok(AdminCaller(session))
    }
}

/// Whatever bearer value was sent, unchecked. Services validate it for the
/// audience they need.
#[derive(Debug, Clone)]
pub struct BearerToken(pub Option<String>);

impl FromRequestParts<AppState> for BearerToken {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &AppState) -> Result<Self, Self::Rejection> {
        Ok(BearerToken(bearer(parts)))
    }
}

impl BearerToken {
    pub fn required(self) -> Result<String, ApiError> {
        self.0.ok_or_else(ApiError::unauthenticated)
    }
}
