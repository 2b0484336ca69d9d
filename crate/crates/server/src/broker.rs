//! Identity broker endpoints, the device flow and the viewer context.

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use gatekeep_core::broker::{AuthSession, DeviceGrant, DevicePoll, FederatedIdentity, IdPAssertion, IdentityProvider, IdpKind};
use gatekeep_core::registry::{LinuxAccount, Project, RegistryAction, RoleBinding};
use gatekeep_core::Timestamp;

use crate::auth::Caller;
use crate::error::{ApiError, ApiResult, Body, Query};
use crate::request::RequestId;
use crate::AppState;

pub fn routes() -> Router<AppState> {
    Router::new()
        .route("/idps", get(idps))
        .route("/authenticate", post(authenticate))
        .route("/register", post(register))
        .route("/link", post(link))
        .route("/resolve", get(resolve))
        .route("/identities/{pid}/suspend", post(suspend))
        .route("/device/start", post(device_start))
        .route("/device/approve", post(device_approve))
        .route("/device/poll", post(device_poll))
        .route("/session", get(session))
        .route("/simulate/{idp_id}/assert", post(simulate))
}

#[derive(Debug, Deserialize)]
struct KindFilter {
    kind: Option<String>,
}

async fn idps(State(s): State<AppState>, Query(q): Query<KindFilter>) -> ApiResult<Json<Vec<IdentityProvider>>> {
    let kind = q
        .kind
        .map(|k| k.parse::<IdpKind>())
        .transpose()
        .map_err(ApiError::bad_request)?;
    Ok(Json(s.platform.broker.discover_idps(kind)))
}

async fn authenticate(
    State(s): State<AppState>,
    rid: RequestId,
    Body(assertion): Body<IdPAssertion>,
) -> ApiResult<Json<AuthSession>> {
    let session = rid.scope(|| s.platform.broker.authenticate(&assertion.idp_id, &assertion))?;
    Ok(Json(session))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub assertion: IdPAssertion,
    pub invitation_token: String,
}

async fn register(
    State(s): State<AppState>,
    rid: RequestId,
    Body(req): Body<RegisterRequest>,
) -> ApiResult<(StatusCode, Json<FederatedIdentity>)> {
    let identity = rid.scope(|| s.platform.broker.register_identity(&req.assertion, &req.invitation_token))?;
    Ok((StatusCode::CREATED, Json(identity)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LinkRequest {
    pub assertion: IdPAssertion,
}

async fn link(
    State(s): State<AppState>,
    rid: RequestId,
    Caller(session): Caller,
    Body(req): Body<LinkRequest>,
) -> ApiResult<Json<FederatedIdentity>> {
    Ok(Json(rid.scope(|| s.platform.broker.link_identity(&session, &req.assertion))?))
}

#[derive(Debug, Deserialize)]
struct ResolveQuery {
    idp_id: String,
    subject: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub persistent_id: String,
}

/// Callers may resolve their own logins; looking up anyone else needs the
/// right to view other users' authorizations.
async fn resolve(
    State(s): State<AppState>,
    Caller(session): Caller,
    Query(q): Query<ResolveQuery>,
) -> ApiResult<Json<Resolved>> {
    let p = &s.platform;
    let may_view_others = p
        .registry
        .may(&session.persistent_id, RegistryAction::ViewOthersAuthorizations, None);
    match p.broker.resolve_persistent_id(&q.idp_id, &q.subject) {
        Ok(pid) if pid == session.persistent_id || may_view_others => Ok(Json(Resolved { persistent_id: pid })),
        Err(e) if may_view_others => Err(e.into()),
        _ => Err(ApiError::forbidden()),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Suspended {
    pub persistent_id: String,
    pub sessions_revoked: usize,
}

async fn suspend(
    State(s): State<AppState>,
    rid: RequestId,
    Caller(session): Caller,
    Path(pid): Path<String>,
) -> ApiResult<Json<Suspended>> {
    let n = rid.scope(|| s.platform.broker.suspend_identity(&session, &pid))?;
    Ok(Json(Suspended {
        persistent_id: pid,
        sessions_revoked: n,
    }))
}

async fn device_start(State(s): State<AppState>) -> Json<DeviceGrant> {
    Json(s.platform.broker.device_start())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DeviceApproval {
    pub user_code: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Approved {
    pub approved: bool,
}

async fn device_approve(
    State(s): State<AppState>,
    rid: RequestId,
    Caller(session): Caller,
    Body(req): Body<DeviceApproval>,
) -> ApiResult<Json<Approved>> {
    rid.scope(|| s.platform.broker.device_approve(&session, req.user_code.trim()))?;
    Ok(Json(Approved { approved: true }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DevicePollRequest {
    pub device_code: String,
}

async fn device_poll(State(s): State<AppState>, Body(req): Body<DevicePollRequest>) -> Json<DevicePoll> {
    Json(s.platform.broker.device_poll(&req.device_code))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permission {
    pub action: RegistryAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project_id: Option<String>,
}

/// Everything a front end needs to decide what to show. Derived from server
/// state on every call.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewerContext {
    pub persistent_id: String,
    pub email: Option<String>,
    pub session_id: String,
    pub idp_id: String,
    pub idp_kind: IdpKind,
    pub mfa_satisfied: bool,
    pub expires_at: Timestamp,
    pub expires_in_secs: u64,
    pub roles: Vec<RoleBinding>,
    pub projects: Vec<Project>,
    pub linux_accounts: Vec<LinuxAccount>,
    pub permissions: Vec<Permission>,
}

pub fn viewer_context(s: &AppState, session: AuthSession) -> ViewerContext {
    let p = &s.platform;
    let pid = session.persistent_id.clone();
    let auth = p.registry.authorizations_for(&pid);
    let mut permissions = Vec::new();
    for action in RegistryAction::ALL {
        if p.registry.may(&pid, action, None) {
            permissions.push(Permission {
                action,
                project_id: None,
            });
            continue;
        }
        for project in &auth.active_projects {
            if p.registry.may(&pid, action, Some(&project.project_id)) {
                permissions.push(Permission {
                    action,
                    project_id: Some(project.project_id.clone()),
                });
            }
        }
    }
    ViewerContext {
        email: p.broker.identity(&pid).map(|i| i.email),
        persistent_id: pid,
        expires_in_secs: p.clock.now().until(session.expires_at).as_secs(),
        session_id: session.session_id,
        idp_id: session.idp_id,
        idp_kind: session.idp_kind,
        mfa_satisfied: session.mfa_satisfied,
        expires_at: session.expires_at,
        roles: auth.bindings,
        projects: auth.active_projects,
        linux_accounts: auth.linux_accounts,
        permissions,
    }
}

async fn session(State(s): State<AppState>, Caller(session): Caller) -> Json<ViewerContext> {
    Json(viewer_context(&s, session))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulatedLogin {
    pub subject: String,
    pub email: String,
    #[serde(default)]
    pub mfa: Option<bool>,
}

/// Stands in for the upstream IdP's login page. Only mounted with
/// `--simulate-idps`; a real deployment receives assertions from the IdPs.
async fn simulate(
    State(s): State<AppState>,
    Path(idp_id): Path<String>,
    Body(req): Body<SimulatedLogin>,
) -> ApiResult<Json<IdPAssertion>> {
    if !s.simulate_idps {
        return Err(ApiError::not_found());
    }
    let sim = s
        .platform
        .simulated_idp(&idp_id)
        .ok_or_else(|| ApiError::new("UnknownIdP", format!("unknown identity provider `{idp_id}`")))?;
    let mfa = req.mfa.unwrap_or(sim.provider().mfa_required);
    Ok(Json(sim.assert(&req.subject, &req.email, mfa, s.platform.clock.now())))
}
