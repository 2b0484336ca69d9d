use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Allocator,
    Pi,
    Researcher,
    Admin,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Allocator, Role::Pi, Role::Researcher, Role::Admin];

    /// Project roles must name a project; platform roles must not.
    pub fn is_project_role(self) -> bool {
        matches!(self, Role::Pi | Role::Researcher)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Allocator => "allocator",
            Role::Pi => "pi",
            Role::Researcher => "researcher",
            Role::Admin => "admin",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "allocator" => Ok(Role::Allocator),
            "pi" => Ok(Role::Pi),
            "researcher" => Ok(Role::Researcher),
            "admin" => Ok(Role::Admin),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub gpu_hours: u64,
    pub storage_gb: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectState {
    Active,
    Expired,
    Revoked,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub project_id: String,
    pub code: String,
    pub title: String,
    pub allocation: Allocation,
    pub starts_at: Timestamp,
    pub expires_at: Timestamp,
    pub state: ProjectState,
}

impl Project {
    /// Active at `now`, regardless of whether a sweep has run yet.
    pub fn is_live(&self, now: Timestamp) -> bool {
        self.state == ProjectState::Active && self.starts_at <= now && now < self.expires_at
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleBinding {
    pub persistent_id: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project_id: Option<String>,
    pub granted_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expires_at: Option<Timestamp>,
}

impl RoleBinding {
    pub fn is_current(&self, now: Timestamp) -> bool {
        self.expires_at.is_none_or(|t| now < t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InvitationState {
    Pending,
    Consumed,
    Expired,
    Cancelled,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invitation {
    pub token: String,
    pub email: String,
    /// `None` for platform-role (allocator/admin) invitations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project_id: Option<String>,
    pub role: Role,
    pub invited_by: String,
    pub expires_at: Timestamp,
    pub state: InvitationState,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinuxAccount {
    pub username: String,
    pub persistent_id: String,
    pub project_id: String,
    pub created_at: Timestamp,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Authorizations {
    pub bindings: Vec<RoleBinding>,
    pub linux_accounts: Vec<LinuxAccount>,
    pub active_projects: Vec<Project>,
}

impl Authorizations {
    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty() && self.linux_accounts.is_empty() && self.active_projects.is_empty()
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.bindings.iter().any(|b| b.role == role)
    }

    pub fn role_on(&self, project_id: &str) -> Option<Role> {
        self.bindings
            .iter()
            .find(|b| b.project_id.as_deref() == Some(project_id))
            .map(|b| b.role)
    }

    pub fn project(&self, project_id: &str) -> Option<&Project> {
        self.active_projects.iter().find(|p| p.project_id == project_id)
    }
}

/// What to take away in [`super::ProjectRegistry::revoke`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum RevokeTarget {
    /// One member's binding on one project.
    Member { persistent_id: String, project_id: String },
    /// The whole project and every binding on it.
    Project { project_id: String },
    /// An allocator or admin role.
    Platform { persistent_id: String, role: Role },
}

/// Sent to listeners after bindings disappear so that downstream credentials
/// can be invalidated before the next validation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RevocationNotice {
    Member { persistent_id: String, project_id: String },
    Platform { persistent_id: String, role: Role },
}

pub trait RevocationListener: Send + Sync {
    fn on_revocation(&self, notice: &RevocationNotice);
}

/// True for POSIX-safe project codes: `^[a-z][a-z0-9-]*$`, at most 16 chars.
pub fn valid_project_code(code: &str) -> bool {
    let mut chars = code.chars();
    code.len() <= 16
        && chars.next().is_some_and(|c| c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}

pub fn valid_username(name: &str) -> bool {
    name.len() <= 31 && valid_project_code_chars(name)
}

fn valid_project_code_chars(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}
