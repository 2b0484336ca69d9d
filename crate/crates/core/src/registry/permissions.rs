//! The declared permission matrix for registry actions.

use serde::{Deserialize, Serialize};

use super::model::Role;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistryAction {
    CreateProject,
    InvitePi,
    InviteResearcher,
    RevokeResearcher,
    RevokePi,
    RevokeProject,
    InvitePlatform,
    RevokePlatform,
    SweepExpiry,
    ViewOthersAuthorizations,
}

impl RegistryAction {
    pub const ALL: [RegistryAction; 10] = [
        RegistryAction::CreateProject,
        RegistryAction::InvitePi,
        RegistryAction::InviteResearcher,
        RegistryAction::RevokeResearcher,
        RegistryAction::RevokePi,
        RegistryAction::RevokeProject,
        RegistryAction::InvitePlatform,
        RegistryAction::RevokePlatform,
        RegistryAction::SweepExpiry,
        RegistryAction::ViewOthersAuthorizations,
    ];
}

/// `(role, action)` pairs that are allowed. Project roles only count on the
/// project the action targets. Anything not listed is denied.
pub const PERMISSIONS: &[(Role, RegistryAction)] = &[
    (Role::Allocator, RegistryAction::CreateProject),
    (Role::Allocator, RegistryAction::InvitePi),
    (Role::Allocator, RegistryAction::RevokeResearcher),
    (Role::Allocator, RegistryAction::RevokePi),
    (Role::Allocator, RegistryAction::RevokeProject),
    (Role::Allocator, RegistryAction::SweepExpiry),
    (Role::Allocator, RegistryAction::ViewOthersAuthorizations),
    (Role::Pi, RegistryAction::InviteResearcher),
    (Role::Pi, RegistryAction::RevokeResearcher),
    (Role::Admin, RegistryAction::InvitePlatform),
    (Role::Admin, RegistryAction::RevokePlatform),
    (Role::Admin, RegistryAction::SweepExpiry),
    (Role::Admin, RegistryAction::ViewOthersAuthorizations),
];

pub fn role_permits(role: Role, action: RegistryAction) -> bool {
    PERMISSIONS.contains(&(role, action))
}

/// Actions a holder of `role` may perform, in declaration order.
pub fn actions_for(role: Role) -> Vec<RegistryAction> {
    RegistryAction::ALL
        .into_iter()
        .filter(|a| role_permits(role, *a))
        .collect()
}
