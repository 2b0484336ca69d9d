//! Short-lived, audience-scoped access tokens.
//!
//! Every token names exactly one audience and is checked against the
//! revocation set and the kill switches on every validation.

mod keys;
pub mod wire;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

pub use keys::{KeyRing, KeyState, PublishedKey};
pub use wire::TokenClaims;

use crate::audit::{Auditor, ANONYMOUS};
use crate::broker::idp::IdpKind;
use crate::broker::session::{AuthSession, SessionError, SessionStore};
use crate::clock::{Clock, Timestamp};
use crate::crypto::{self, KeyPair};
use crate::ids;
use crate::registry::{Authorizations, ProjectRegistry, RevocationListener, RevocationNotice, Role};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("not authorized for this audience")]
    NotAuthorized,
    #[error("this audience requires a login through the administrator identity provider")]
    AdminIdPRequired,
    #[error("session: {0}")]
    Session(SessionError),
    #[error("token is malformed")]
    Malformed,
    #[error("bad signature")]
    BadSignature,
    #[error("token is not valid yet")]
    NotYetValid,
    #[error("token expired")]
    Expired,
    #[error("token audience `{actual}` does not match `{expected}`")]
    AudienceMismatch { expected: String, actual: String },
    #[error("token revoked")]
    Revoked,
    #[error("access blocked by kill switch")]
    KillSwitched,
    #[error("forbidden")]
    Forbidden,
    #[error("unknown session or token")]
    UnknownTarget,
}

impl TokenError {
    pub fn code(&self) -> &'static str {
        match self {
            TokenError::NotAuthorized => "NotAuthorized",
            TokenError::AdminIdPRequired => "AdminIdPRequired",
            TokenError::Session(SessionError::Expired) => "SessionExpired",
            TokenError::Session(SessionError::Revoked) => "SessionRevoked",
            TokenError::Session(SessionError::Unknown) => "UnknownSession",
            TokenError::Malformed => "Malformed",
            TokenError::BadSignature => "BadSignature",
            TokenError::NotYetValid => "NotYetValid",
            TokenError::Expired => "Expired",
            TokenError::AudienceMismatch { .. } => "AudienceMismatch",
            TokenError::Revoked => "Revoked",
            TokenError::KillSwitched => "KillSwitched",
            TokenError::Forbidden => "Forbidden",
            TokenError::UnknownTarget => "UnknownTarget",
        }
    }
}

/// Consulted on every validation. Implemented by the gateway's kill-switch
/// board.
pub trait KillSwitchProbe: Send + Sync {
    /// True when requests by `sub` to `service` must be refused.
    fn blocks(&self, sub: &str, service: &str) -> bool;
}

/// Backends re-check the claims they are handed through this.
pub trait Introspector: Send + Sync {
    fn introspect(&self, token: &str, audience: &str) -> Result<TokenClaims, TokenError>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AudienceClass {
    /// `mgmt:*`
    Admin,
    /// `tunnel-admin`: registering reverse-tunnel endpoints.
    TunnelAdmin,
    /// `ssh-ca`
    SshCa,
    /// `tunnel:<service>`
    Tunnel(String),
    /// `portal`
    Portal,
}

impl AudienceClass {
    pub fn of(audience: &str) -> Option<AudienceClass> {
        if let Some(rest) = audience.strip_prefix("mgmt:") {
            return (!rest.is_empty() && !rest.contains('*')).then_some(AudienceClass::Admin);
        }
        if let Some(service) = audience.strip_prefix("tunnel:") {
            return (!service.is_empty() && !service.contains('*')).then(|| AudienceClass::Tunnel(service.to_owned()));
        }
        match audience {
            "tunnel-admin" => Some(AudienceClass::TunnelAdmin),
            "ssh-ca" => Some(AudienceClass::SshCa),
            "portal" => Some(AudienceClass::Portal),
            _ => None,
        }
    }

    pub fn is_admin(&self) -> bool {
        matches!(self, AudienceClass::Admin | AudienceClass::TunnelAdmin)
    }
}

#[derive(Debug, Clone)]
pub struct TokenConfig {
    pub user_ttl: Duration,
    pub admin_ttl: Duration,
}

impl Default for TokenConfig {
    fn default() -> Self {
        TokenConfig {
            user_ttl: Duration::from_secs(3600),
            admin_ttl: Duration::from_secs(900),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessToken {
    pub token: String,
    pub key_id: String,
    pub claims: TokenClaims,
}

#[derive(Debug, Default)]
struct Revocations {
    sessions: HashMap<String, Timestamp>,
    tokens: HashMap<String, Timestamp>,
}

#[derive(Debug, Default)]
struct Issued {
    by_jti: HashMap<String, TokenClaims>,
    by_sub: HashMap<String, HashSet<String>>,
}

pub struct TokenService {
    clock: Arc<dyn Clock>,
    sessions: Arc<SessionStore>,
    registry: Arc<ProjectRegistry>,
    auditor: Auditor,
    config: TokenConfig,
    keys: RwLock<KeyRing>,
    revoked: RwLock<Revocations>,
    issued: RwLock<Issued>,
    kill_switch: RwLock<Option<Arc<dyn KillSwitchProbe>>>,
}

impl std::fmt::Debug for TokenService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TokenService").finish_non_exhaustive()
    }
}

impl TokenService {
    pub fn new(
        config: TokenConfig,
        signing_key: KeyPair,
        clock: Arc<dyn Clock>,
        sessions: Arc<SessionStore>,
        registry: Arc<ProjectRegistry>,
        auditor: Auditor,
    ) -> Self {
        let now = clock.now();
        TokenService {
            keys: RwLock::new(KeyRing::new(signing_key, now)),
            clock,
            sessions,
            registry,
            auditor,
            config,
            revoked: RwLock::new(Revocations::default()),
            issued: RwLock::new(Issued::default()),
            kill_switch: RwLock::new(None),
        }
    }

    pub fn set_kill_switch_probe(&self, probe: Arc<dyn KillSwitchProbe>) {
        *self.kill_switch.write() = Some(probe);
    }

    pub fn config(&self) -> &TokenConfig {
        &self.config
    }

    pub fn published_keys(&self) -> Vec<PublishedKey> {
        self.keys.read().published(self.clock.now())
    }

    /// Decides role, scope and lifetime for a request, or refuses it.
    fn authorize(
        &self,
        session: &AuthSession,
        audience: &str,
        project_scope: Option<&str>,
        auth: &Authorizations,
    ) -> Result<(Role, Option<String>, Duration, Option<Timestamp>), TokenError> {
        let class = AudienceClass::of(audience).ok_or(TokenError::NotAuthorized)?;
        if class.is_admin() {
            if session.idp_kind != IdpKind::Admin {
                return Err(TokenError::AdminIdPRequired);
            }
            if project_scope.is_some() || !auth.has_role(Role::Admin) {
                return Err(TokenError::NotAuthorized);
            }
            return Ok((Role::Admin, None, self.config.admin_ttl, None));
        }
        let ttl = self.config.user_ttl;
        let scoped = |project_id: &str| -> Result<(Role, Option<String>, Duration, Option<Timestamp>), TokenError> {
            let role = auth.role_on(project_id).ok_or(TokenError::NotAuthorized)?;
            let project = auth.project(project_id).ok_or(TokenError::NotAuthorized)?;
            Ok((role, Some(project_id.to_owned()), ttl, Some(project.expires_at)))
        };
        match class {
            AudienceClass::Tunnel(_) => match project_scope {
                Some(p) => scoped(p),
                // Default to the first active project by code.
                None => match auth.active_projects.first() {
                    Some(p) => scoped(&p.project_id),
                    None => Err(TokenError::NotAuthorized),
                },
            },
            AudienceClass::SshCa => {
                if project_scope.is_some() {
                    return Err(TokenError::NotAuthorized);
                }
                let role = if auth.has_role(Role::Pi) {
                    Role::Pi
                } else if auth.has_role(Role::Researcher) {
                    Role::Researcher
                } else {
                    return Err(TokenError::NotAuthorized);
                };
                Ok((role, None, ttl, None))
            }
            AudienceClass::Portal => match project_scope {
                Some(p) => scoped(p),
                None => {
                    let role = [Role::Admin, Role::Allocator, Role::Pi, Role::Researcher]
                        .into_iter()
                        .find(|r| auth.has_role(*r))
                        .ok_or(TokenError::NotAuthorized)?;
                    Ok((role, None, ttl, None))
                }
            },
            AudienceClass::Admin | AudienceClass::TunnelAdmin => unreachable!("handled above"),
        }
    }

    /// Issues a token for `audience`. The lifetime is the smaller of
    /// `requested_ttl` and the audience class maximum, and never outlives a
    /// scoped project.
    pub fn issue_token(
        &self,
        session: &AuthSession,
        audience: &str,
        project_scope: Option<&str>,
        requested_ttl: Option<Duration>,
    ) -> Result<AccessToken, TokenError> {
        let now = self.clock.now();
        let result = (|| {
            let stored = self.sessions.check(&session.session_id, now).map_err(TokenError::Session)?;
            if stored.persistent_id != session.persistent_id {
                return Err(TokenError::Session(SessionError::Unknown));
            }
            if self.revoked.read().sessions.contains_key(&stored.session_id) {
                return Err(TokenError::Session(SessionError::Revoked));
            }
            let auth = self.registry.authorizations_for(&stored.persistent_id);
            let (role, scope, max_ttl, cap) = self.authorize(&stored, audience, project_scope, &auth)?;
            let ttl = requested_ttl.map_or(max_ttl, |r| r.min(max_ttl)).max(Duration::from_secs(1));
            let mut exp = now + ttl;
            if let Some(cap) = cap {
                exp = exp.min(cap);
            }
            let claims = TokenClaims {
                jti: ids::prefixed("tok", 12),
                sub: stored.persistent_id.clone(),
                sid: stored.session_id.clone(),
                role,
                aud: audience.to_owned(),
                project_scope: scope,
                iat: now,
                exp,
            };
            let (token, key_id) = {
                let mut keys = self.keys.write();
                keys.note_signed(exp);
                let key = keys.active();
                (wire::encode(&claims, key), key.key_id().to_owned())
            };
            let mut issued = self.issued.write();
            issued.by_sub.entry(claims.sub.clone()).or_default().insert(claims.jti.clone());
            issued.by_jti.insert(claims.jti.clone(), claims.clone());
            Ok(AccessToken { token, key_id, claims })
        })();
        let mut attrs = vec![("aud", audience.to_owned())];
        if let Some(p) = project_scope {
            attrs.push(("project_scope", p.to_owned()));
        }
        match &result {
            Ok(t) => {
                attrs.push(("jti", t.claims.jti.clone()));
                self.auditor.allow(&session.persistent_id, "token.issue", attrs)
            }
            Err(e) => self.auditor.deny(&session.persistent_id, "token.issue", e.code(), attrs),
        }
        result
    }

    /// Full validation without an audit record, for callers that record
    /// their own decision.
    pub fn verify(&self, token: &str, expected_audience: &str) -> Result<TokenClaims, TokenError> {
        self.verify_at(token, expected_audience, self.clock.now())
    }

    /// Valid iff the signature checks under a live key, `iat <= now < exp`,
    /// the audience matches exactly, neither the token nor its session is
    /// revoked, a scoped project is still live, and no kill switch applies.
    pub fn verify_at(&self, token: &str, expected_audience: &str, now: Timestamp) -> Result<TokenClaims, TokenError> {
        let decoded = wire::decode(token).map_err(|_| TokenError::Malformed)?;
        let key = self
            .keys
            .read()
            .verifying_key(&decoded.header.kid, now)
            .ok_or(TokenError::BadSignature)?;
        if !crypto::verify(&key, decoded.signing_input.as_bytes(), &decoded.signature) {
            return Err(TokenError::BadSignature);
        }
        let claims = decoded.claims;
        if now < claims.iat {
            return Err(TokenError::NotYetValid);
        }
        if now >= claims.exp {
            return Err(TokenError::Expired);
        }
        if claims.aud != expected_audience {
            return Err(TokenError::AudienceMismatch {
                expected: expected_audience.to_owned(),
                actual: claims.aud,
            });
        }
        {
            let revoked = self.revoked.read();
            if revoked.tokens.contains_key(&claims.jti) || revoked.sessions.contains_key(&claims.sid) {
                return Err(TokenError::Revoked);
            }
        }
        if self.sessions.is_revoked(&claims.sid) {
            return Err(TokenError::Revoked);
        }
        if let Some(project_id) = &claims.project_scope {
            if !self.registry.project(project_id).is_some_and(|p| p.is_live(now)) {
                return Err(TokenError::Revoked);
            }
        }
        if let Some(probe) = self.kill_switch.read().as_ref() {
            if probe.blocks(&claims.sub, &claims.aud) {
                return Err(TokenError::KillSwitched);
            }
        }
        Ok(claims)
    }

    /// The introspection endpoint: [`Self::verify`] plus an audit record.
    pub fn validate_token(&self, token: &str, expected_audience: &str) -> Result<TokenClaims, TokenError> {
        let result = self.verify(token, expected_audience);
        let actor = match &result {
            Ok(c) => c.sub.clone(),
            Err(_) => wire::decode(token).map(|d| d.claims.sub).unwrap_or_else(|_| ANONYMOUS.to_owned()),
        };
        let attrs = vec![("aud", expected_audience.to_owned())];
        match &result {
            Ok(_) => self.auditor.allow(&actor, "token.introspect", attrs),
            Err(e) => self.auditor.deny(&actor, "token.introspect", e.code(), attrs),
        }
        result
    }

    /// Revokes a session (every token bearing its id) or a single token.
    /// Admins may revoke anything; others only what they own.
    pub fn revoke_session(&self, actor: &AuthSession, target: &str) -> Result<(), TokenError> {
        let now = self.clock.now();
        let result = (|| {
            let stored = self.sessions.check(&actor.session_id, now).map_err(TokenError::Session)?;
            let owner = if let Some(s) = self.sessions.get(target) {
                s.persistent_id
            } else if let Some(c) = self.issued.read().by_jti.get(target) {
                c.sub.clone()
            } else {
                return Err(TokenError::UnknownTarget);
            };
            let is_admin = self.registry.authorizations_for(&stored.persistent_id).has_role(Role::Admin);
            if owner != stored.persistent_id && !is_admin {
                return Err(TokenError::Forbidden);
            }
            let mut revoked = self.revoked.write();
            if target.starts_with("ses_") {
                revoked.sessions.entry(target.to_owned()).or_insert(now);
                drop(revoked);
                self.sessions.revoke(target);
            } else {
                revoked.tokens.entry(target.to_owned()).or_insert(now);
            }
            Ok(())
        })();
        let attrs = vec![("target", target.to_owned())];
        match &result {
            Ok(_) => self.auditor.allow(&actor.persistent_id, "token.revoke", attrs),
            Err(e) => self.auditor.deny(&actor.persistent_id, "token.revoke", e.code(), attrs),
        }
        result
    }

    pub fn rotate_signing_key(&self, actor: &AuthSession) -> Result<String, TokenError> {
        let now = self.clock.now();
        let result = (|| {
            let stored = self.sessions.check(&actor.session_id, now).map_err(TokenError::Session)?;
            if !self.registry.authorizations_for(&stored.persistent_id).has_role(Role::Admin) {
                return Err(TokenError::Forbidden);
            }
            Ok(self.keys.write().rotate(KeyPair::generate(), now))
        })();
        match &result {
            Ok(kid) => self.auditor.allow(&actor.persistent_id, "token.rotate", [("key_id", kid.clone())]),
            Err(e) => self.auditor.deny(&actor.persistent_id, "token.rotate", e.code(), Vec::<(String, String)>::new()),
        }
        result
    }

    pub fn is_revoked(&self, jti: &str) -> bool {
        self.revoked.read().tokens.contains_key(jti)
    }

    pub fn revocation_count(&self) -> usize {
        let r = self.revoked.read();
        r.tokens.len() + r.sessions.len()
    }

    fn revoke_matching(&self, sub: &str, pred: impl Fn(&TokenClaims) -> bool) {
        let now = self.clock.now();
        let issued = self.issued.read();
        let Some(jtis) = issued.by_sub.get(sub) else {
            return;
        };
        let mut revoked = self.revoked.write();
        for jti in jtis {
            let claims = &issued.by_jti[jti];
            if now < claims.exp && pred(claims) {
                revoked.tokens.entry(jti.clone()).or_insert(now);
            }
        }
    }
}

impl RevocationListener for TokenService {
    fn on_revocation(&self, notice: &RevocationNotice) {
        match notice {
            RevocationNotice::Member { persistent_id, project_id } => {
                self.revoke_matching(persistent_id, |c| match &c.project_scope {
                    Some(p) => p == project_id,
                    // Unscoped tokens minted from project roles: the ssh-ca
                    // token and project-role portal tokens.
                    None => matches!(c.role, Role::Pi | Role::Researcher),
                })
            }
            RevocationNotice::Platform { persistent_id, role } => {
                let role = *role;
                self.revoke_matching(persistent_id, move |c| c.role == role)
            }
        }
    }
}

impl Introspector for TokenService {
    fn introspect(&self, token: &str, audience: &str) -> Result<TokenClaims, TokenError> {
        self.validate_token(token, audience)
    }
}
