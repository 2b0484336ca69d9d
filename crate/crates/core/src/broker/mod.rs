//! The identity broker: discovery, authentication against simulated IdPs,
//! authorization-led registration and identity linking.

pub mod device;
pub mod idp;
pub mod session;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::audit::{Auditor, ANONYMOUS};
use crate::clock::{Clock, Timestamp};
use crate::ids;
use crate::registry::{ProjectRegistry, RegistryError, Role};

pub use device::{DeviceFlows, DeviceGrant, DevicePoll};
pub use idp::{Assurance, IdPAssertion, IdentityProvider, IdpKind, IdpLink, IdpRegistry, SimulatedIdp};
pub use session::{AuthSession, SessionError, SessionStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentityStatus {
    Active,
    Suspended,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FederatedIdentity {
    pub persistent_id: String,
    pub primary_link: IdpLink,
    pub linked: BTreeSet<IdpLink>,
    pub email: String,
    pub assurance: Assurance,
    pub registered_at: Timestamp,
    pub status: IdentityStatus,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum BrokerError {
    #[error("unknown identity provider `{0}`")]
    UnknownIdP(String),
    #[error("assertion signature or issuer does not check out")]
    BadAssertion,
    #[error("assertion is issued in the future")]
    AssertionFromFuture,
    #[error("assertion is too old to be used")]
    StaleAssertion,
    #[error("this identity provider requires multi-factor authentication")]
    MfaRequired,
    #[error("no registered identity for this login")]
    UnregisteredIdentity,
    #[error("identity is suspended")]
    IdentitySuspended,
    #[error("this login is already registered")]
    AlreadyRegistered,
    #[error("this login is already linked to another identity")]
    PairAlreadyLinkedElsewhere,
    #[error("not found")]
    NotFound,
    #[error("forbidden")]
    Forbidden,
    #[error("session: {0}")]
    Session(SessionError),
    #[error(transparent)]
    Registry(RegistryError),
}

impl BrokerError {
    pub fn code(&self) -> &'static str {
        match self {
            BrokerError::UnknownIdP(_) => "UnknownIdP",
            BrokerError::BadAssertion => "BadAssertion",
            BrokerError::AssertionFromFuture => "AssertionFromFuture",
            BrokerError::StaleAssertion => "StaleAssertion",
            BrokerError::MfaRequired => "MfaRequired",
            BrokerError::UnregisteredIdentity => "UnregisteredIdentity",
            BrokerError::IdentitySuspended => "IdentitySuspended",
            BrokerError::AlreadyRegistered => "AlreadyRegistered",
            BrokerError::PairAlreadyLinkedElsewhere => "PairAlreadyLinkedElsewhere",
            BrokerError::NotFound => "NotFound",
            BrokerError::Forbidden => "Forbidden",
            BrokerError::Session(SessionError::Expired) => "SessionExpired",
            BrokerError::Session(SessionError::Revoked) => "SessionRevoked",
            BrokerError::Session(SessionError::Unknown) => "UnknownSession",
            BrokerError::Registry(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    pub session_ttl: Duration,
    pub clock_skew: Duration,
    /// Assertions older than this are refused, which bounds replay.
    pub max_assertion_age: Duration,
    pub device_grant_ttl: Duration,
    pub verification_uri: String,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        BrokerConfig {
            session_ttl: Duration::from_secs(600),
            clock_skew: Duration::from_secs(60),
            max_assertion_age: Duration::from_secs(300),
            device_grant_ttl: Duration::from_secs(600),
            verification_uri: "http://localhost:8080/device".into(),
        }
    }
}

#[derive(Debug, Default)]
struct Identities {
    by_id: HashMap<String, FederatedIdentity>,
    links: HashMap<IdpLink, String>,
}

pub struct IdentityBroker {
    clock: Arc<dyn Clock>,
    idps: IdpRegistry,
    sessions: Arc<SessionStore>,
    registry: Arc<ProjectRegistry>,
    auditor: Auditor,
    config: BrokerConfig,
    identities: RwLock<Identities>,
    devices: DeviceFlows,
}

impl std::fmt::Debug for IdentityBroker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IdentityBroker").field("idps", &self.idps.len()).finish_non_exhaustive()
    }
}

impl IdentityBroker {
    pub fn new(
        config: BrokerConfig,
        idps: IdpRegistry,
        clock: Arc<dyn Clock>,
        sessions: Arc<SessionStore>,
        registry: Arc<ProjectRegistry>,
        auditor: Auditor,
    ) -> Self {
        IdentityBroker {
            devices: DeviceFlows::new(config.device_grant_ttl, config.verification_uri.clone()),
            clock,
            idps,
            sessions,
            registry,
            auditor,
            config,
            identities: RwLock::new(Identities::default()),
        }
    }

    pub fn sessions(&self) -> &Arc<SessionStore> {
        &self.sessions
    }

    pub fn config(&self) -> &BrokerConfig {
        &self.config
    }

    /// Providers sorted by display name. Admin providers only show up when
    /// asked for by kind.
    pub fn discover_idps(&self, filter: Option<IdpKind>) -> Vec<IdentityProvider> {
        let mut out: Vec<_> = self
            .idps
            .iter()
            .filter(|p| match filter {
                Some(kind) => p.kind == kind,
                None => p.kind != IdpKind::Admin,
            })
            .cloned()
            .collect();
        out.sort_by(|a, b| a.display_name.cmp(&b.display_name).then(a.idp_id.cmp(&b.idp_id)));
        out
    }

    pub fn provider(&self, idp_id: &str) -> Option<&IdentityProvider> {
        self.idps.get(idp_id).map(|(p, _)| p)
    }

    /// Checks issuer, signature, freshness and MFA. Returns the provider.
    fn check_assertion(&self, idp_id: &str, assertion: &IdPAssertion, now: Timestamp) -> Result<IdentityProvider, BrokerError> {
        let (provider, key) = self
            .idps
            .get(idp_id)
            .ok_or_else(|| BrokerError::UnknownIdP(idp_id.to_owned()))?;
        if assertion.idp_id != idp_id || !assertion.verify_signature(key) {
            return Err(BrokerError::BadAssertion);
        }
        if assertion.issued_at > now + self.config.clock_skew {
            return Err(BrokerError::AssertionFromFuture);
        }
        if assertion.issued_at + self.config.max_assertion_age < now {
            return Err(BrokerError::StaleAssertion);
        }
        if provider.mfa_required && !assertion.mfa_satisfied {
            return Err(BrokerError::MfaRequired);
        }
        Ok(provider.clone())
    }

    pub fn authenticate(&self, idp_id: &str, assertion: &IdPAssertion) -> Result<AuthSession, BrokerError> {
        let now = self.clock.now();
        let mut actor = ANONYMOUS.to_owned();
        let result = (|| {
            let provider = self.check_assertion(idp_id, assertion, now)?;
            let identities = self.identities.read();
            let pid = identities.links.get(&assertion.pair()).ok_or(BrokerError::UnregisteredIdentity)?;
            actor = pid.clone();
            if identities.by_id[pid].status == IdentityStatus::Suspended {
                return Err(BrokerError::IdentitySuspended);
            }
            Ok(self.sessions.open(
                pid,
                idp_id,
                provider.kind,
                assertion.mfa_satisfied,
                now,
                self.config.session_ttl,
            ))
        })();
        let attrs = vec![("idp_id", idp_id.to_owned())];
        match &result {
            Ok(s) => self.auditor.allow(&actor, "auth.login", {
                let mut a = attrs;
                a.push(("session_id", s.session_id.clone()));
                a
            }),
            Err(e) => self.auditor.deny(&actor, "auth.login", e.code(), attrs),
        }
        result
    }

    /// Creates an identity only when `invitation_token` names a pending
    /// invitation for the asserted email. Identity creation and invitation
    /// consumption happen under the identity lock, so either both happen or
    /// neither does.
    pub fn register_identity(&self, assertion: &IdPAssertion, invitation_token: &str) -> Result<FederatedIdentity, BrokerError> {
        let now = self.clock.now();
        let result = (|| {
            let provider = self.check_assertion(&assertion.idp_id, assertion, now)?;
            let mut identities = self.identities.write();
            let pair = assertion.pair();
            if identities.links.contains_key(&pair) {
                return Err(BrokerError::AlreadyRegistered);
            }
            let persistent_id = loop {
                let candidate = ids::persistent_id();
                if !identities.by_id.contains_key(&candidate) {
                    break candidate;
                }
            };
            self.registry
                .redeem_for_registration(invitation_token, &assertion.email, provider.kind, &persistent_id)
                .map_err(BrokerError::Registry)?;
            let identity = FederatedIdentity {
                persistent_id: persistent_id.clone(),
                primary_link: pair.clone(),
                linked: BTreeSet::from([pair.clone()]),
                email: assertion.email.trim().to_lowercase(),
                assurance: provider.assurance,
                registered_at: now,
                status: IdentityStatus::Active,
            };
            identities.links.insert(pair, persistent_id.clone());
            identities.by_id.insert(persistent_id, identity.clone());
            Ok(identity)
        })();
        let attrs = vec![("idp_id", assertion.idp_id.clone())];
        match &result {
            Ok(identity) => self.auditor.allow(&identity.persistent_id, "identity.register", attrs),
            Err(e) => self.auditor.deny(ANONYMOUS, "identity.register", e.code(), attrs),
        }
        result
    }

    pub fn link_identity(&self, session: &AuthSession, assertion: &IdPAssertion) -> Result<FederatedIdentity, BrokerError> {
        let now = self.clock.now();
        let result = (|| {
            let stored = self.sessions.check(&session.session_id, now).map_err(BrokerError::Session)?;
            self.check_assertion(&assertion.idp_id, assertion, now)?;
            let mut identities = self.identities.write();
            let pair = assertion.pair();
            match identities.links.get(&pair) {
                Some(owner) if *owner != stored.persistent_id => return Err(BrokerError::PairAlreadyLinkedElsewhere),
                _ => {}
            }
            let identity = identities
                .by_id
                .get(&stored.persistent_id)
                .cloned()
                .ok_or(BrokerError::NotFound)?;
            if identity.status == IdentityStatus::Suspended {
                return Err(BrokerError::IdentitySuspended);
            }
            let mut identity = identity;
            identity.linked.insert(pair.clone());
            identity.assurance = identity
                .linked
                .iter()
                .filter_map(|l| self.idps.get(&l.idp_id).map(|(p, _)| p.assurance))
                .max()
                .unwrap_or(identity.assurance);
            identities.links.insert(pair, stored.persistent_id.clone());
            identities.by_id.insert(stored.persistent_id.clone(), identity.clone());
            Ok(identity)
        })();
        let attrs = vec![("idp_id", assertion.idp_id.clone())];
        match &result {
            Ok(_) => self.auditor.allow(&session.persistent_id, "identity.link", attrs),
            Err(e) => self.auditor.deny(&session.persistent_id, "identity.link", e.code(), attrs),
        }
        result
    }

    pub fn resolve_persistent_id(&self, idp_id: &str, subject: &str) -> Result<String, BrokerError> {
        let pair = IdpLink {
            idp_id: idp_id.to_owned(),
            subject: subject.to_owned(),
        };
        self.identities.read().links.get(&pair).cloned().ok_or(BrokerError::NotFound)
    }

    pub fn identity(&self, persistent_id: &str) -> Option<FederatedIdentity> {
        self.identities.read().by_id.get(persistent_id).cloned()
    }

    pub fn identity_count(&self) -> usize {
        self.identities.read().by_id.len()
    }

    /// Blocks further logins for `persistent_id` and ends its sessions.
    /// Admins only.
    pub fn suspend_identity(&self, actor: &AuthSession, persistent_id: &str) -> Result<usize, BrokerError> {
        let now = self.clock.now();
        let result = (|| {
            let stored = self.sessions.check(&actor.session_id, now).map_err(BrokerError::Session)?;
            if !self.registry.authorizations_for(&stored.persistent_id).has_role(Role::Admin) {
                return Err(BrokerError::Forbidden);
            }
            let mut identities = self.identities.write();
            let identity = identities.by_id.get_mut(persistent_id).ok_or(BrokerError::NotFound)?;
            identity.status = IdentityStatus::Suspended;
            Ok(self.sessions.revoke_all_for(persistent_id).len())
        })();
        let attrs = vec![("target", persistent_id.to_owned())];
        match &result {
            Ok(_) => self.auditor.allow(&actor.persistent_id, "identity.suspend", attrs),
            Err(e) => self.auditor.deny(&actor.persistent_id, "identity.suspend", e.code(), attrs),
        }
        result
    }

    /// Validates a session id presented by a front end and returns the
    /// stored record.
    pub fn check_session(&self, session_id: &str) -> Result<AuthSession, BrokerError> {
        let session = self.sessions.check(session_id, self.clock.now()).map_err(BrokerError::Session)?;
        let suspended = self
            .identities
            .read()
            .by_id
            .get(&session.persistent_id)
            .is_some_and(|i| i.status == IdentityStatus::Suspended);
        if suspended {
            return Err(BrokerError::IdentitySuspended);
        }
        Ok(session)
    }

    /// Starts a device-style login for a client without a browser.
    pub fn device_start(&self) -> DeviceGrant {
        self.devices.start(self.clock.now())
    }

    /// Approves a pending device login from an already authenticated
    /// (browser) session. The device receives its own session.
    pub fn device_approve(&self, session: &AuthSession, user_code: &str) -> Result<(), BrokerError> {
        let now = self.clock.now();
        let result = (|| {
            let stored = self.check_session(&session.session_id)?;
            let device_session = self.sessions.open(
                &stored.persistent_id,
                &stored.idp_id,
                stored.idp_kind,
                stored.mfa_satisfied,
                now,
                self.config.session_ttl,
            );
            self.devices.approve(user_code, device_session, now).map_err(|_| BrokerError::NotFound)
        })();
        let attrs = vec![("user_code", user_code.to_owned())];
        match &result {
            Ok(_) => self.auditor.allow(&session.persistent_id, "device.approve", attrs),
            Err(e) => self.auditor.deny(&session.persistent_id, "device.approve", e.code(), attrs),
        }
        result
    }

    pub fn device_poll(&self, device_code: &str) -> DevicePoll {
        self.devices.poll(device_code, self.clock.now())
    }
}
