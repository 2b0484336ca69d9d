//! Token service and SSH certificate authority.

use std::time::Duration;

use axum::extract::State;
use axum::http::header::CONTENT_TYPE;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use gatekeep_core::sshca::IssuedCertificate;
use gatekeep_core::token::{AccessToken, PublishedKey, TokenClaims};

use crate::auth::{BearerToken, Caller, SessionCaller};
use crate::error::{ApiResult, Body};
use crate::request::RequestId;
use crate::AppState;

pub fn routes() -> Router<AppState> {
    Router::new()
        .route("/token", post(issue))
        .route("/introspect", post(introspect))
        .route("/revoke", post(revoke))
        .route("/rotate", post(rotate))
        .route("/keys", get(keys))
        .route("/sign", post(sign))
        .route("/ca.pub", get(ca_pub))
        .route("/ssh/params", get(ssh_params))
}

/// What a client needs to render its SSH config block.
#[derive(Debug, Serialize, Deserialize)]
pub struct SshParams {
    pub cluster_domain: String,
    pub jump_host: String,
}

async fn ssh_params(State(s): State<AppState>) -> Json<SshParams> {
    let p = s.platform.ssh_params(None);
    Json(SshParams {
        cluster_domain: p.cluster_domain,
        jump_host: p.jump_host,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TokenRequest {
    pub audience: String,
    #[serde(default)]
    pub project_scope: Option<String>,
    #[serde(default)]
    pub ttl_secs: Option<u64>,
}

async fn issue(
    State(s): State<AppState>,
    rid: RequestId,
    SessionCaller(session): SessionCaller,
    Body(req): Body<TokenRequest>,
) -> ApiResult<Json<AccessToken>> {
    let token = rid.scope(|| {
        s.platform.tokens.issue_token(
            &session,
            &req.audience,
            req.project_scope.as_deref(),
            req.ttl_secs.map(Duration::from_secs),
        )
    })?;
    Ok(Json(token))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IntrospectRequest {
    pub token: String,
    pub audience: String,
}

/// Always 200: a rejected token is an answer, not a failed call.
#[derive(Debug, Serialize, Deserialize)]
pub struct Introspection {
    pub active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claims: Option<TokenClaims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

async fn introspect(
    State(s): State<AppState>,
    rid: RequestId,
    Body(req): Body<IntrospectRequest>,
) -> Json<Introspection> {
    Json(match rid.scope(|| s.platform.tokens.validate_token(&req.token, &req.audience)) {
        Ok(claims) => Introspection {
            active: true,
            claims: Some(claims),
            error: None,
        },
        Err(e) => Introspection {
            active: false,
            claims: None,
            error: Some(e.code().to_owned()),
        },
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RevokeRequest {
    /// A session id or a token id.
    pub target: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RevokeAck {
    pub revoked: String,
}

async fn revoke(
    State(s): State<AppState>,
    rid: RequestId,
    Caller(session): Caller,
    Body(req): Body<RevokeRequest>,
) -> ApiResult<Json<RevokeAck>> {
    rid.scope(|| s.platform.tokens.revoke_session(&session, &req.target))?;
    Ok(Json(RevokeAck { revoked: req.target }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Rotated {
    pub key_id: String,
}

async fn rotate(State(s): State<AppState>, rid: RequestId, Caller(session): Caller) -> ApiResult<Json<Rotated>> {
    let key_id = rid.scope(|| s.platform.tokens.rotate_signing_key(&session))?;
    Ok(Json(Rotated { key_id }))
}

async fn keys(State(s): State<AppState>) -> Json<Vec<PublishedKey>> {
    Json(s.platform.tokens.published_keys())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SignRequest {
    /// `ssh-ed25519 AAAA... comment`
    pub public_key: String,
}

/// Takes an `ssh-ca` access token as bearer.
async fn sign(
    State(s): State<AppState>,
    rid: RequestId,
    bearer: BearerToken,
    Body(req): Body<SignRequest>,
) -> ApiResult<Json<IssuedCertificate>> {
    let token = bearer.0.unwrap_or_default();
    Ok(Json(rid.scope(|| s.platform.ca.sign_user_key(&token, &req.public_key))?))
}

async fn ca_pub(State(s): State<AppState>) -> impl IntoResponse {
    ([(CONTENT_TYPE, "text/plain; charset=utf-8")], format!("{}\n", s.platform.ca.public_key_line()))
}
