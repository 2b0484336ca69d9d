//! Projects, role bindings, invitations and per-project Linux accounts: the
//! source of truth for who may do what.

mod model;
mod outbox;
mod permissions;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::RwLock;

pub use model::*;
pub use outbox::{Outbox, OutboxMessage};
pub use permissions::{actions_for, role_permits, RegistryAction, PERMISSIONS};

use crate::audit::Auditor;
use crate::broker::idp::IdpKind;
use crate::broker::session::{AuthSession, SessionError, SessionStore};
use crate::clock::{Clock, Timestamp};
use crate::ids;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("forbidden")]
    Forbidden,
    #[error("project code `{0}` is already taken")]
    DuplicateCode(String),
    #[error("project code `{0}` is not a POSIX-safe slug of at most 16 characters")]
    InvalidCode(String),
    #[error("project must expire after it starts")]
    InvalidWindow,
    #[error("unknown project")]
    UnknownProject,
    #[error("role {0} cannot be invited by this actor")]
    RoleNotInvitable(Role),
    #[error("project is not active")]
    ProjectInactive,
    #[error("invitation has expired")]
    InvitationExpired,
    #[error("invitation was already used")]
    AlreadyConsumed,
    #[error("unknown invitation token")]
    UnknownToken,
    #[error("no matching authorization for this identity")]
    NoMatchingAuthorization,
    #[error("platform roles must register through the administrator identity provider")]
    AdminIdPRequired,
    #[error("nothing to revoke")]
    NothingToRevoke,
    #[error("no active role binding for this project")]
    NotAuthorized,
    #[error("actor session: {0}")]
    Session(SessionError),
}

impl RegistryError {
    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::Forbidden => "Forbidden",
            RegistryError::DuplicateCode(_) => "DuplicateCode",
            RegistryError::InvalidCode(_) => "InvalidCode",
            RegistryError::InvalidWindow => "InvalidWindow",
            RegistryError::UnknownProject => "UnknownProject",
            RegistryError::RoleNotInvitable(_) => "RoleNotInvitable",
            RegistryError::ProjectInactive => "ProjectInactive",
            RegistryError::InvitationExpired => "InvitationExpired",
            RegistryError::AlreadyConsumed => "AlreadyConsumed",
            RegistryError::UnknownToken => "UnknownToken",
            RegistryError::NoMatchingAuthorization => "NoMatchingAuthorization",
            RegistryError::AdminIdPRequired => "AdminIdPRequired",
            RegistryError::NothingToRevoke => "NothingToRevoke",
            RegistryError::NotAuthorized => "NotAuthorized",
            RegistryError::Session(SessionError::Expired) => "SessionExpired",
            RegistryError::Session(SessionError::Revoked) => "SessionRevoked",
            RegistryError::Session(SessionError::Unknown) => "UnknownSession",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegistryConfig {
    pub invitation_ttl: Duration,
    /// Expected upper bound on admins. Exceeding it logs a warning only.
    pub admin_soft_limit: usize,
    pub outbox_path: Option<PathBuf>,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        RegistryConfig {
            invitation_ttl: Duration::from_secs(14 * 24 * 3600),
            admin_soft_limit: 20,
            outbox_path: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewProject {
    pub code: String,
    pub title: String,
    pub allocation: Allocation,
    pub starts_at: Timestamp,
    pub expires_at: Timestamp,
}

#[derive(Debug, Default)]
struct State {
    projects: BTreeMap<String, Project>,
    ids_by_code: HashMap<String, String>,
    bindings: Vec<RoleBinding>,
    invitations: HashMap<String, Invitation>,
    accounts: BTreeMap<(String, String), LinuxAccount>,
    usernames: HashSet<String>,
    account_seq: HashMap<String, u32>,
}

impl State {
    fn project_role(&self, persistent_id: &str, project_id: &str) -> Option<Role> {
        self.bindings
            .iter()
            .find(|b| b.persistent_id == persistent_id && b.project_id.as_deref() == Some(project_id))
            .map(|b| b.role)
    }

    fn platform_roles(&self, persistent_id: &str, now: Timestamp) -> Vec<Role> {
        self.bindings
            .iter()
            .filter(|b| b.persistent_id == persistent_id && b.project_id.is_none() && b.is_current(now))
            .map(|b| b.role)
            .collect()
    }

    /// Roles `actor` holds that count for an action on `project_id`.
    fn roles_for(&self, actor: &str, project_id: Option<&str>, now: Timestamp) -> Vec<Role> {
        let mut roles = self.platform_roles(actor, now);
        if let Some(pid) = project_id {
            roles.extend(self.project_role(actor, pid));
        }
        roles
    }

    fn may(&self, actor: &str, action: RegistryAction, project_id: Option<&str>, now: Timestamp) -> bool {
        self.roles_for(actor, project_id, now)
            .into_iter()
            .any(|r| role_permits(r, action))
    }

    fn upsert_binding(&mut self, binding: RoleBinding) -> RoleBinding {
        if let Some(existing) = self.bindings.iter_mut().find(|b| {
            b.persistent_id == binding.persistent_id
                && b.project_id == binding.project_id
                && (b.project_id.is_some() || b.role == binding.role)
        }) {
            existing.role = binding.role;
            return existing.clone();
        }
        self.bindings.push(binding.clone());
        binding
    }

    fn ensure_account(&mut self, persistent_id: &str, project_id: &str, now: Timestamp) -> LinuxAccount {
        let key = (persistent_id.to_owned(), project_id.to_owned());
        if let Some(acct) = self.accounts.get(&key) {
            return acct.clone();
        }
        let code = self.projects[project_id].code.clone();
        let seq = self.account_seq.entry(project_id.to_owned()).or_insert(0);
        let username = loop {
            *seq += 1;
            let candidate = format!("{code}-{:04}", *seq);
            if !self.usernames.contains(&candidate) {
                break candidate;
            }
        };
        self.usernames.insert(username.clone());
        let account = LinuxAccount {
            username,
            persistent_id: persistent_id.to_owned(),
            project_id: project_id.to_owned(),
            created_at: now,
        };
        self.accounts.insert(key, account.clone());
        account
    }
}

pub struct ProjectRegistry {
    clock: Arc<dyn Clock>,
    sessions: Arc<SessionStore>,
    auditor: Auditor,
    config: RegistryConfig,
    outbox: Outbox,
    state: RwLock<State>,
    listeners: RwLock<Vec<Arc<dyn RevocationListener>>>,
}

impl std::fmt::Debug for ProjectRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProjectRegistry").finish_non_exhaustive()
    }
}

impl ProjectRegistry {
    pub fn new(
        config: RegistryConfig,
        clock: Arc<dyn Clock>,
        sessions: Arc<SessionStore>,
        auditor: Auditor,
    ) -> Self {
        ProjectRegistry {
            outbox: Outbox::new(config.outbox_path.clone()),
            clock,
            sessions,
            auditor,
            config,
            state: RwLock::new(State::default()),
            listeners: RwLock::new(Vec::new()),
        }
    }

    pub fn subscribe(&self, listener: Arc<dyn RevocationListener>) {
        self.listeners.write().push(listener);
    }

    pub fn outbox(&self) -> &Outbox {
        &self.outbox
    }

    fn notify(&self, notices: &[RevocationNotice]) {
        let listeners = self.listeners.read().clone();
        for notice in notices {
            for l in &listeners {
                l.on_revocation(notice);
            }
        }
    }

    fn actor(&self, session: &AuthSession, now: Timestamp) -> Result<String, RegistryError> {
        let stored = self
            .sessions
            .check(&session.session_id, now)
            .map_err(RegistryError::Session)?;
        if stored.persistent_id != session.persistent_id {
            return Err(RegistryError::Session(SessionError::Unknown));
        }
        Ok(stored.persistent_id)
    }

    fn audited<T>(
        &self,
        actor: &str,
        action: &str,
        attrs: Vec<(&str, String)>,
        result: Result<T, RegistryError>,
    ) -> Result<T, RegistryError> {
        match &result {
            Ok(_) => self.auditor.allow(actor, action, attrs),
            Err(e) => self.auditor.deny(actor, action, e.code(), attrs),
        }
        result
    }

    pub fn create_project(&self, actor: &AuthSession, new: NewProject) -> Result<Project, RegistryError> {
        let now = self.clock.now();
        let attrs = vec![("code", new.code.clone())];
        let result = self.actor(actor, now).and_then(|pid| {
            let mut state = self.state.write();
            if !state.may(&pid, RegistryAction::CreateProject, None, now) {
                return Err(RegistryError::Forbidden);
            }
            if !valid_project_code(&new.code) {
                return Err(RegistryError::InvalidCode(new.code.clone()));
            }
            if new.expires_at <= new.starts_at {
                return Err(RegistryError::InvalidWindow);
            }
            if state.ids_by_code.contains_key(&new.code) {
                return Err(RegistryError::DuplicateCode(new.code.clone()));
            }
            let project = Project {
                project_id: ids::prefixed("prj", 9),
                code: new.code.clone(),
                title: new.title.clone(),
                allocation: new.allocation,
                starts_at: new.starts_at,
                expires_at: new.expires_at,
                state: ProjectState::Active,
            };
            state.ids_by_code.insert(project.code.clone(), project.project_id.clone());
            state.projects.insert(project.project_id.clone(), project.clone());
            Ok(project)
        });
        self.audited(&actor.persistent_id, "project.create", attrs, result)
    }

    pub fn invite(
        &self,
        actor: &AuthSession,
        email: &str,
        project_id: &str,
        role: Role,
    ) -> Result<Invitation, RegistryError> {
        let now = self.clock.now();
        let attrs = vec![("project_id", project_id.to_owned()), ("role", role.to_string())];
        let result = self.actor(actor, now).and_then(|pid| {
            let mut state = self.state.write();
            let project = state.projects.get(project_id).cloned().ok_or(RegistryError::UnknownProject)?;
            let may_pi = state.may(&pid, RegistryAction::InvitePi, Some(project_id), now);
            let may_researcher = state.may(&pid, RegistryAction::InviteResearcher, Some(project_id), now);
            let allowed = match role {
                Role::Pi => may_pi,
                Role::Researcher => may_researcher,
                Role::Allocator | Role::Admin => false,
            };
            if !allowed {
                return Err(if may_pi || may_researcher {
                    RegistryError::RoleNotInvitable(role)
                } else {
                    RegistryError::Forbidden
                });
            }
            if !project.is_live(now) {
                return Err(RegistryError::ProjectInactive);
            }
            let invitation = Invitation {
                token: ids::prefixed("inv", 24),
                email: email.trim().to_lowercase(),
                project_id: Some(project_id.to_owned()),
                role,
                invited_by: pid,
                expires_at: now + self.config.invitation_ttl,
                state: InvitationState::Pending,
            };
            state.invitations.insert(invitation.token.clone(), invitation.clone());
            self.outbox.push(OutboxMessage {
                to: invitation.email.clone(),
                subject: format!("You have been invited to join project {}", project.code),
                invitation_token: invitation.token.clone(),
                role,
                project_code: Some(project.code.clone()),
                expires_at: invitation.expires_at,
            });
            Ok(invitation)
        });
        self.audited(&actor.persistent_id, "invitation.create", attrs, result)
    }

    /// Admins invite new allocators and admins. Those invitations can only be
    /// redeemed through an administrator identity provider.
    pub fn invite_platform(&self, actor: &AuthSession, email: &str, role: Role) -> Result<Invitation, RegistryError> {
        let now = self.clock.now();
        let attrs = vec![("role", role.to_string())];
        let result = self.actor(actor, now).and_then(|pid| {
            let mut state = self.state.write();
            if !state.may(&pid, RegistryAction::InvitePlatform, None, now) {
                return Err(RegistryError::Forbidden);
            }
            if role.is_project_role() {
                return Err(RegistryError::RoleNotInvitable(role));
            }
            Ok(self.platform_invitation(&mut state, email, role, &pid, now))
        });
        self.audited(&actor.persistent_id, "invitation.create", attrs, result)
    }

    /// Seeds a platform-role invitation at deployment time, before any admin
    /// exists to issue one.
    pub fn bootstrap_invitation(&self, email: &str, role: Role) -> Result<Invitation, RegistryError> {
        if role.is_project_role() {
            return Err(RegistryError::RoleNotInvitable(role));
        }
        let now = self.clock.now();
        let mut state = self.state.write();
        Ok(self.platform_invitation(&mut state, email, role, "bootstrap", now))
    }

    fn platform_invitation(&self, state: &mut State, email: &str, role: Role, by: &str, now: Timestamp) -> Invitation {
        let invitation = Invitation {
            token: ids::prefixed("inv", 24),
            email: email.trim().to_lowercase(),
            project_id: None,
            role,
            invited_by: by.to_owned(),
            expires_at: now + self.config.invitation_ttl,
            state: InvitationState::Pending,
        };
        state.invitations.insert(invitation.token.clone(), invitation.clone());
        self.outbox.push(OutboxMessage {
            to: invitation.email.clone(),
            subject: format!("You have been invited to the {role} role"),
            invitation_token: invitation.token.clone(),
            role,
            project_code: None,
            expires_at: invitation.expires_at,
        });
        invitation
    }

    pub fn accept_invitation(&self, token: &str, persistent_id: &str) -> Result<RoleBinding, RegistryError> {
        let now = self.clock.now();
        let result = (|| {
            let mut state = self.state.write();
            let inv = state.invitations.get(token).cloned().ok_or(RegistryError::UnknownToken)?;
            match inv.state {
                InvitationState::Consumed => return Err(RegistryError::AlreadyConsumed),
                InvitationState::Expired | InvitationState::Cancelled => {
                    return Err(RegistryError::InvitationExpired)
                }
                InvitationState::Pending => {}
            }
            if now >= inv.expires_at {
                state.invitations.get_mut(token).expect("present").state = InvitationState::Expired;
                return Err(RegistryError::InvitationExpired);
            }
            if inv.project_id.is_none() {
                return Err(RegistryError::AdminIdPRequired);
            }
            self.bind_from_invitation(&mut state, token, persistent_id, now)
        })();
        self.audited(persistent_id, "invitation.accept", vec![], result)
    }

    /// Consumes an invitation on behalf of a brand new identity. Called by the
    /// broker while it holds its own identity lock, so identity creation and
    /// consumption happen together or not at all. Not audited here; the
    /// broker records the registration.
    pub(crate) fn redeem_for_registration(
        &self,
        token: &str,
        email: &str,
        idp_kind: IdpKind,
        persistent_id: &str,
    ) -> Result<RoleBinding, RegistryError> {
        let now = self.clock.now();
        let mut state = self.state.write();
        let inv = state
            .invitations
            .get(token)
            .cloned()
            .ok_or(RegistryError::NoMatchingAuthorization)?;
        if inv.email != email.trim().to_lowercase() || inv.state != InvitationState::Pending {
            return Err(RegistryError::NoMatchingAuthorization);
        }
        if now >= inv.expires_at {
            state.invitations.get_mut(token).expect("present").state = InvitationState::Expired;
            return Err(RegistryError::InvitationExpired);
        }
        if inv.project_id.is_none() && idp_kind != IdpKind::Admin {
            return Err(RegistryError::AdminIdPRequired);
        }
        self.bind_from_invitation(&mut state, token, persistent_id, now)
    }

    fn bind_from_invitation(
        &self,
        state: &mut State,
        token: &str,
        persistent_id: &str,
        now: Timestamp,
    ) -> Result<RoleBinding, RegistryError> {
        let inv = state.invitations[token].clone();
        if let Some(project_id) = &inv.project_id {
            let live = state.projects.get(project_id).is_some_and(|p| p.is_live(now));
            if !live {
                return Err(RegistryError::ProjectInactive);
            }
        }
        let binding = state.upsert_binding(RoleBinding {
            persistent_id: persistent_id.to_owned(),
            role: inv.role,
            project_id: inv.project_id.clone(),
            granted_at: now,
            expires_at: None,
        });
        if let Some(project_id) = &inv.project_id {
            state.ensure_account(persistent_id, project_id, now);
        }
        state.invitations.get_mut(token).expect("present").state = InvitationState::Consumed;
        if inv.role == Role::Admin {
            let admins = state.bindings.iter().filter(|b| b.role == Role::Admin).count();
            if admins > self.config.admin_soft_limit {
                tracing::warn!(admins, limit = self.config.admin_soft_limit, "admin count exceeds expected size");
            }
        }
        Ok(binding)
    }

    pub fn revoke(&self, actor: &AuthSession, target: &RevokeTarget) -> Result<usize, RegistryError> {
        let now = self.clock.now();
        let attrs = match target {
            RevokeTarget::Member { persistent_id, project_id } => {
                vec![("target", persistent_id.clone()), ("project_id", project_id.clone())]
            }
            RevokeTarget::Project { project_id } => vec![("project_id", project_id.clone())],
            RevokeTarget::Platform { persistent_id, role } => {
                vec![("target", persistent_id.clone()), ("role", role.to_string())]
            }
        };
        let result = self.actor(actor, now).and_then(|pid| {
            let notices = {
                let mut state = self.state.write();
                Self::revoke_locked(&mut state, &pid, target, now)?
            };
            self.notify(&notices);
            Ok(notices.len())
        });
        self.audited(&actor.persistent_id, "membership.revoke", attrs, result)
    }

    fn revoke_locked(
        state: &mut State,
        actor: &str,
        target: &RevokeTarget,
        now: Timestamp,
    ) -> Result<Vec<RevocationNotice>, RegistryError> {
        match target {
            RevokeTarget::Member { persistent_id, project_id } => {
                if !state.projects.contains_key(project_id) {
                    return Err(RegistryError::UnknownProject);
                }
                let may_researcher = state.may(actor, RegistryAction::RevokeResearcher, Some(project_id), now);
                let may_pi = state.may(actor, RegistryAction::RevokePi, Some(project_id), now);
                if !may_researcher && !may_pi {
                    return Err(RegistryError::Forbidden);
                }
                let role = state
                    .project_role(persistent_id, project_id)
                    .ok_or(RegistryError::NothingToRevoke)?;
                let permitted = match role {
                    Role::Pi => may_pi,
                    _ => may_researcher,
                };
                if !permitted {
                    return Err(RegistryError::Forbidden);
                }
                state.bindings.retain(|b| {
                    !(b.persistent_id == *persistent_id && b.project_id.as_deref() == Some(project_id.as_str()))
                });
                Ok(vec![RevocationNotice::Member {
                    persistent_id: persistent_id.clone(),
                    project_id: project_id.clone(),
                }])
            }
            RevokeTarget::Project { project_id } => {
                if !state.projects.contains_key(project_id) {
                    return Err(RegistryError::UnknownProject);
                }
                if !state.may(actor, RegistryAction::RevokeProject, Some(project_id), now) {
                    return Err(RegistryError::Forbidden);
                }
                let project = state.projects.get_mut(project_id).expect("present");
                if project.state == ProjectState::Revoked {
                    return Err(RegistryError::NothingToRevoke);
                }
                project.state = ProjectState::Revoked;
                let mut notices = Vec::new();
                state.bindings.retain(|b| {
                    if b.project_id.as_deref() == Some(project_id.as_str()) {
                        notices.push(RevocationNotice::Member {
                            persistent_id: b.persistent_id.clone(),
                            project_id: project_id.clone(),
                        });
                        false
                    } else {
                        true
                    }
                });
                for inv in state.invitations.values_mut() {
                    if inv.project_id.as_deref() == Some(project_id.as_str()) && inv.state == InvitationState::Pending {
                        inv.state = InvitationState::Cancelled;
                    }
                }
                Ok(notices)
            }
            RevokeTarget::Platform { persistent_id, role } => {
                if !state.may(actor, RegistryAction::RevokePlatform, None, now) {
                    return Err(RegistryError::Forbidden);
                }
                if role.is_project_role() {
                    return Err(RegistryError::NothingToRevoke);
                }
                let before = state.bindings.len();
                state
                    .bindings
                    .retain(|b| !(b.persistent_id == *persistent_id && b.project_id.is_none() && b.role == *role));
                if state.bindings.len() == before {
                    return Err(RegistryError::NothingToRevoke);
                }
                Ok(vec![RevocationNotice::Platform {
                    persistent_id: persistent_id.clone(),
                    role: *role,
                }])
            }
        }
    }

    pub fn provision_linux_account(&self, persistent_id: &str, project_id: &str) -> Result<LinuxAccount, RegistryError> {
        let now = self.clock.now();
        let result = (|| {
            let mut state = self.state.write();
            let project = state.projects.get(project_id).cloned().ok_or(RegistryError::UnknownProject)?;
            match state.project_role(persistent_id, project_id) {
                Some(Role::Pi | Role::Researcher) => {}
                _ => return Err(RegistryError::NotAuthorized),
            }
            if !project.is_live(now) {
                return Err(RegistryError::ProjectInactive);
            }
            Ok(state.ensure_account(persistent_id, project_id, now))
        })();
        self.audited(persistent_id, "account.provision", vec![("project_id", project_id.to_owned())], result)
    }

    /// Everything `persistent_id` may currently use. Expired projects are
    /// filtered here even if no sweep has run.
    pub fn authorizations_for(&self, persistent_id: &str) -> Authorizations {
        let now = self.clock.now();
        let state = self.state.read();
        let mut out = Authorizations::default();
        for b in state.bindings.iter().filter(|b| b.persistent_id == persistent_id && b.is_current(now)) {
            match &b.project_id {
                None => out.bindings.push(b.clone()),
                Some(project_id) => {
                    let Some(project) = state.projects.get(project_id).filter(|p| p.is_live(now)) else {
                        continue;
                    };
                    out.bindings.push(b.clone());
                    out.active_projects.push(project.clone());
                    if let Some(acct) = state.accounts.get(&(persistent_id.to_owned(), project_id.clone())) {
                        out.linux_accounts.push(acct.clone());
                    }
                }
            }
        }
        out.active_projects.sort_by(|a, b| a.code.cmp(&b.code));
        out.linux_accounts.sort_by(|a, b| a.username.cmp(&b.username));
        out
    }

    /// Marks projects past their expiry as expired and tells listeners to
    /// drop credentials for their members. Returns the number of projects
    /// that expired in this sweep.
    pub fn sweep_expiry(&self) -> usize {
        let now = self.clock.now();
        let (count, notices) = {
            let mut state = self.state.write();
            let mut expired = Vec::new();
            for p in state.projects.values_mut() {
                if p.state == ProjectState::Active && now >= p.expires_at {
                    p.state = ProjectState::Expired;
                    expired.push(p.project_id.clone());
                }
            }
            let notices: Vec<_> = state
                .bindings
                .iter()
                .filter_map(|b| {
                    let pid = b.project_id.as_ref()?;
                    expired.contains(pid).then(|| RevocationNotice::Member {
                        persistent_id: b.persistent_id.clone(),
                        project_id: pid.clone(),
                    })
                })
                .collect();
            (expired.len(), notices)
        };
        self.notify(&notices);
        count
    }

    /// [`Self::sweep_expiry`] as an audited operation on behalf of an actor.
    pub fn sweep_expiry_as(&self, actor: &AuthSession) -> Result<usize, RegistryError> {
        let now = self.clock.now();
        let result = self.actor(actor, now).and_then(|pid| {
            if !self.state.read().may(&pid, RegistryAction::SweepExpiry, None, now) {
                return Err(RegistryError::Forbidden);
            }
            Ok(self.sweep_expiry())
        });
        self.audited(&actor.persistent_id, "project.sweep", vec![], result)
    }

    /// Whether the session's identity may perform `action` (optionally on a
    /// project). Used by front ends to decide what to show.
    pub fn may(&self, persistent_id: &str, action: RegistryAction, project_id: Option<&str>) -> bool {
        let now = self.clock.now();
        self.state.read().may(persistent_id, action, project_id, now)
    }

    pub fn project(&self, project_id: &str) -> Option<Project> {
        self.state.read().projects.get(project_id).cloned()
    }

    pub fn project_by_code(&self, code: &str) -> Option<Project> {
        let state = self.state.read();
        state.ids_by_code.get(code).and_then(|id| state.projects.get(id)).cloned()
    }

    pub fn invitation(&self, token: &str) -> Option<Invitation> {
        self.state.read().invitations.get(token).cloned()
    }

    pub fn members(&self, project_id: &str) -> Vec<RoleBinding> {
        self.state
            .read()
            .bindings
            .iter()
            .filter(|b| b.project_id.as_deref() == Some(project_id))
            .cloned()
            .collect()
    }

    pub fn projects(&self) -> Vec<Project> {
        self.state.read().projects.values().cloned().collect()
    }

    /// Linux accounts on one project, whatever the project's state.
    pub fn accounts(&self, project_id: &str) -> Vec<LinuxAccount> {
        self.state
            .read()
            .accounts
            .values()
            .filter(|a| a.project_id == project_id)
            .cloned()
            .collect()
    }

    pub fn admin_count(&self) -> usize {
        self.state.read().bindings.iter().filter(|b| b.role == Role::Admin).count()
    }
}
