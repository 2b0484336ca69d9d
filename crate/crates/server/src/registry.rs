//! Projects, invitations, members and authorizations.

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use gatekeep_core::broker::AuthSession;
use gatekeep_core::registry::{
    Allocation, Authorizations, Invitation, NewProject, Project, RegistryAction, RevokeTarget, Role, RoleBinding,
};
use gatekeep_core::Timestamp;

use crate::auth::Caller;
use crate::error::{ApiError, ApiResult, Body};
use crate::request::RequestId;
use crate::AppState;

pub fn routes() -> Router<AppState> {
    Router::new()
        .route("/projects", get(list_projects).post(create_project))
        .route("/projects/{id}", get(get_project).delete(revoke_project))
        .route("/projects/{id}/invitations", post(invite))
        .route("/projects/{id}/members", get(members))
        .route("/projects/{id}/members/{pid}", delete(revoke_member))
        .route("/invitations/{token}/accept", post(accept))
        .route("/platform/invitations", post(invite_platform))
        .route("/platform/roles/{pid}/{role}", delete(revoke_platform))
        .route("/users/{pid}/authorizations", get(authorizations))
        .route("/admin/sweep-expiry", post(sweep))
}

fn sees_everything(s: &AppState, session: &AuthSession) -> bool {
    s.platform
        .registry
        .may(&session.persistent_id, RegistryAction::ViewOthersAuthorizations, None)
}

/// Member of the project (while it is live) or someone who sees everything.
fn may_view_project(s: &AppState, session: &AuthSession, project_id: &str) -> bool {
    sees_everything(s, session)
        || s.platform
            .registry
            .authorizations_for(&session.persistent_id)
            .role_on(project_id)
            .is_some()
}

async fn list_projects(State(s): State<AppState>, Caller(session): Caller) -> Json<Vec<Project>> {
    let registry = &s.platform.registry;
    let mut projects = if sees_everything(&s, &session) {
        registry.projects()
    } else {
        registry.authorizations_for(&session.persistent_id).active_projects
    };
    projects.sort_by(|a, b| a.code.cmp(&b.code));
    Json(projects)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProjectRequest {
    pub code: String,
    pub title: String,
    #[serde(default)]
    pub allocation: Allocation,
    /// Defaults to now.
    #[serde(default)]
    pub starts_at: Option<Timestamp>,
    pub expires_at: Timestamp,
}

async fn create_project(
    State(s): State<AppState>,
    rid: RequestId,
    Caller(session): Caller,
    Body(req): Body<ProjectRequest>,
) -> ApiResult<(StatusCode, Json<Project>)> {
    let new = NewProject {
        code: req.code,
        title: req.title,
        allocation: req.allocation,
        starts_at: req.starts_at.unwrap_or_else(|| s.platform.clock.now()),
        expires_at: req.expires_at,
    };
    let project = rid.scope(|| s.platform.registry.create_project(&session, new))?;
    Ok((StatusCode::CREATED, Json(project)))
}

async fn get_project(
    State(s): State<AppState>,
    Caller(session): Caller,
    Path(id): Path<String>,
) -> ApiResult<Json<Project>> {
    let project = s
        .platform
        .registry
        .project(&id)
        .ok_or_else(|| ApiError::new("UnknownProject", "unknown project"))?;
    if !may_view_project(&s, &session, &id) {
        return Err(ApiError::forbidden());
    }
    Ok(Json(project))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Revoked {
    pub revoked: usize,
}

async fn revoke_project(
    State(s): State<AppState>,
    rid: RequestId,
    Caller(session): Caller,
    Path(id): Path<String>,
) -> ApiResult<Json<Revoked>> {
    let target = RevokeTarget::Project { project_id: id };
    let n = rid.scope(|| s.platform.registry.revoke(&session, &target))?;
    Ok(Json(Revoked { revoked: n }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InviteRequest {
    pub email: String,
    pub role: Role,
}

async fn invite(
    State(s): State<AppState>,
    rid: RequestId,
    Caller(session): Caller,
    Path(id): Path<String>,
    Body(req): Body<InviteRequest>,
) -> ApiResult<(StatusCode, Json<Invitation>)> {
    let inv = rid.scope(|| s.platform.registry.invite(&session, &req.email, &id, req.role))?;
    Ok((StatusCode::CREATED, Json(inv)))
}

async fn invite_platform(
    State(s): State<AppState>,
    rid: RequestId,
    Caller(session): Caller,
    Body(req): Body<InviteRequest>,
) -> ApiResult<(StatusCode, Json<Invitation>)> {
    let inv = rid.scope(|| s.platform.registry.invite_platform(&session, &req.email, req.role))?;
    Ok((StatusCode::CREATED, Json(inv)))
}

/// A role binding with the details a project dashboard shows next to it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub persistent_id: String,
    pub role: Role,
    pub email: Option<String>,
    pub username: Option<String>,
    pub granted_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expires_at: Option<Timestamp>,
}

async fn members(
    State(s): State<AppState>,
    Caller(session): Caller,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<Member>>> {
    let p = &s.platform;
    if p.registry.project(&id).is_none() {
        return Err(ApiError::new("UnknownProject", "unknown project"));
    }
    if !may_view_project(&s, &session, &id) {
        return Err(ApiError::forbidden());
    }
    let accounts = p.registry.accounts(&id);
    let now = p.clock.now();
    let members = p
        .registry
        .members(&id)
        .into_iter()
        .filter(|b: &RoleBinding| b.is_current(now))
        .map(|b| Member {
            email: p.broker.identity(&b.persistent_id).map(|i| i.email),
            username: accounts
                .iter()
                .find(|a| a.persistent_id == b.persistent_id)
                .map(|a| a.username.clone()),
            persistent_id: b.persistent_id,
            role: b.role,
            granted_at: b.granted_at,
            expires_at: b.expires_at,
        })
        .collect();
    Ok(Json(members))
}

async fn revoke_member(
    State(s): State<AppState>,
    rid: RequestId,
    Caller(session): Caller,
    Path((id, pid)): Path<(String, String)>,
) -> ApiResult<Json<Revoked>> {
    let target = RevokeTarget::Member {
        persistent_id: pid,
        project_id: id,
    };
    let n = rid.scope(|| s.platform.registry.revoke(&session, &target))?;
    Ok(Json(Revoked { revoked: n }))
}

async fn revoke_platform(
    State(s): State<AppState>,
    rid: RequestId,
    Caller(session): Caller,
    Path((pid, role)): Path<(String, String)>,
) -> ApiResult<Json<Revoked>> {
    let role: Role = role.parse().map_err(ApiError::bad_request)?;
    let target = RevokeTarget::Platform {
        persistent_id: pid,
        role,
    };
    let n = rid.scope(|| s.platform.registry.revoke(&session, &target))?;
    Ok(Json(Revoked { revoked: n }))
}

/// An existing identity accepting a further invitation. New users accept as
/// part of registration instead.
async fn accept(
    State(s): State<AppState>,
    rid: RequestId,
    Caller(session): Caller,
    Path(token): Path<String>,
) -> ApiResult<Json<RoleBinding>> {
    Ok(Json(rid.scope(|| {
        s.platform.registry.accept_invitation(&token, &session.persistent_id)
    })?))
}

async fn authorizations(
    State(s): State<AppState>,
    Caller(session): Caller,
    Path(pid): Path<String>,
) -> ApiResult<Json<Authorizations>> {
    if pid != session.persistent_id && !sees_everything(&s, &session) {
        return Err(ApiError::forbidden());
    }
    Ok(Json(s.platform.registry.authorizations_for(&pid)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Swept {
    pub expired: usize,
}

async fn sweep(State(s): State<AppState>, rid: RequestId, Caller(session): Caller) -> ApiResult<Json<Swept>> {
    let n = rid.scope(|| s.platform.registry.sweep_expiry_as(&session))?;
    Ok(Json(Swept { expired: n }))
}
