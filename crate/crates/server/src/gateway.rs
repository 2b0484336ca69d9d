//! Web ingress through reverse tunnels, tunnel registration, kill switches
//! and the management tailnet.

use std::collections::BTreeMap;
use std::net::SocketAddr;

use axum::extract::{ConnectInfo, Request, State};
use axum::http::header::AUTHORIZATION;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{any, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use gatekeep_core::gateway::{BackendRequest, KillScope, KillSwitch, MgmtSession, TunnelEndpoint};

use crate::auth::{AdminCaller, BearerToken};
use crate::error::{ApiError, ApiResult, Body};
use crate::request::RequestId;
use crate::AppState;

/// Request bodies larger than this are refused at the ingress.
const MAX_INGRESS_BODY: usize = 4 << 20;

pub fn routes() -> Router<AppState> {
    Router::new()
        .route("/t/{*path}", any(ingress))
        .route("/tunnels", get(list_tunnels).post(register_tunnel))
        .route("/killswitch", get(list_switches).post(set_switch))
        .route("/mgmt/connect", post(mgmt_connect))
}

/// Where a request came from, for rate limiting and audit. The forwarded
/// header is only believed when a trusted proxy sits in front.
fn source(s: &AppState, headers: &HeaderMap, peer: Option<SocketAddr>) -> String {
    if s.trust_forwarded {
        let forwarded = headers
            .get("x-forwarded-for")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.split(',').next())
            .map(str::trim)
            .filter(|v| !v.is_empty());
        if let Some(f) = forwarded {
            return f.to_owned();
        }
    }
    peer.map(|p| p.ip().to_string()).unwrap_or_else(|| "direct".into())
}

async fn ingress(State(s): State<AppState>, rid: RequestId, request: Request) -> Response {
    let peer = request.extensions().get::<ConnectInfo<SocketAddr>>().map(|c| c.0);
    let (parts, body) = request.into_parts();
    let src = source(&s, &parts.headers, peer);
    let token = crate::auth::bearer(&parts);
    let path = parts.uri.path().strip_prefix("/t").unwrap_or("/").to_owned();
    let path = match parts.uri.query() {
        Some(q) => format!("{path}?{q}"),
        None => path,
    };
    let headers: BTreeMap<String, String> = parts
        .headers
        .iter()
        .filter(|(k, _)| *k != AUTHORIZATION)
        .filter_map(|(k, v)| v.to_str().ok().map(|v| (k.as_str().to_owned(), v.to_owned())))
        .collect();
    let body = match axum::body::to_bytes(body, MAX_INGRESS_BODY).await {
        Ok(b) => String::from_utf8_lossy(&b).into_owned(),
        Err(_) => return ApiError::bad_request("request body too large").into_response(),
    };
    let backend_request = BackendRequest {
        method: parts.method.as_str().to_owned(),
        path,
        headers,
        body,
    };
    // Forwarding waits on the tunnel thread, so keep it off the reactor.
    let platform = s.platform.clone();
    let joined = tokio::task::spawn_blocking(move || {
        rid.scope(|| platform.gateway.route_web_request(&src, backend_request, token.as_deref()))
    })
    .await;
    match joined {
        Ok(Ok(r)) => {
            let status = StatusCode::from_u16(r.status).unwrap_or(StatusCode::BAD_GATEWAY);
            (status, r.body).into_response()
        }
        Ok(Err(e)) => ApiError::from(e).into_response(),
        Err(_) => StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TunnelRequest {
    pub path: String,
    pub client_id: String,
}

/// Takes a `tunnel-admin` token as bearer.
async fn register_tunnel(
    State(s): State<AppState>,
    rid: RequestId,
    bearer: BearerToken,
    Body(req): Body<TunnelRequest>,
) -> ApiResult<(StatusCode, Json<TunnelEndpoint>)> {
    let token = bearer.0.unwrap_or_default();
    let ep = rid.scope(|| s.platform.gateway.register_tunnel(&token, &req.path, &req.client_id))?;
    Ok((StatusCode::CREATED, Json(ep)))
}

async fn list_tunnels(State(s): State<AppState>, _: AdminCaller) -> Json<Vec<TunnelEndpoint>> {
    Json(s.platform.gateway.endpoints())
}

async fn list_switches(State(s): State<AppState>, _: AdminCaller) -> Json<Vec<KillSwitch>> {
    Json(s.platform.gateway.kill_switches())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchAction {
    Engage,
    Release,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SwitchRequest {
    pub action: SwitchAction,
    #[serde(flatten)]
    pub scope: KillScope,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SwitchResult {
    pub switch: KillSwitch,
    /// Request id carried by the audit event this change produced.
    pub audit_request_id: String,
}

/// Takes a `mgmt:killswitch` token as bearer.
async fn set_switch(
    State(s): State<AppState>,
    rid: RequestId,
    bearer: BearerToken,
    Body(req): Body<SwitchRequest>,
) -> ApiResult<Json<SwitchResult>> {
    let token = bearer.0.unwrap_or_default();
    let engage = req.action == SwitchAction::Engage;
    let switch = rid.scope(|| s.platform.gateway.set_kill_switch(&token, &req.scope, engage))?;
    Ok(Json(SwitchResult {
        switch,
        audit_request_id: rid.0,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MgmtConnectRequest {
    pub node: String,
}

/// Takes a `mgmt:tailnet` token as bearer.
async fn mgmt_connect(
    State(s): State<AppState>,
    rid: RequestId,
    bearer: BearerToken,
    Body(req): Body<MgmtConnectRequest>,
) -> ApiResult<Json<MgmtSession>> {
    Ok(Json(rid.scope(|| s.platform.mgmt.connect(bearer.0.as_deref(), &req.node))?))
}
