use std::collections::{HashMap, HashSet};
use std::time::Duration;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use super::idp::IdpKind;
use crate::clock::Timestamp;
use crate::ids;

/// A login session. Only lives long enough to obtain tokens or certificates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthSession {
    pub session_id: String,
    pub persistent_id: String,
    pub idp_id: String,
    pub idp_kind: IdpKind,
    pub authenticated_at: Timestamp,
    pub expires_at: Timestamp,
    pub mfa_satisfied: bool,
}

#[derive(Debug, Clone, Copy, thiserror::Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("unknown session")]
    Unknown,
    #[error("session expired")]
    Expired,
    #[error("session revoked")]
    Revoked,
}

/// Every session the broker has issued. Shared by the services that accept a
/// session as proof of identity.
#[derive(Debug, Default)]
pub struct SessionStore {
    inner: RwLock<Inner>,
}

#[derive(Debug, Default)]
struct Inner {
    sessions: HashMap<String, AuthSession>,
    revoked: HashSet<String>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn open(
        &self,
        persistent_id: &str,
        idp_id: &str,
        idp_kind: IdpKind,
        mfa_satisfied: bool,
        now: Timestamp,
        ttl: Duration,
    ) -> AuthSession {
        let mut inner = self.inner.write();
        let session_id = loop {
            let candidate = ids::prefixed("ses", 18);
            if !inner.sessions.contains_key(&candidate) {
                break candidate;
            }
        };
        let session = AuthSession {
            session_id: session_id.clone(),
            persistent_id: persistent_id.to_owned(),
            idp_id: idp_id.to_owned(),
            idp_kind,
            authenticated_at: now,
            expires_at: now + ttl.max(Duration::from_secs(1)),
            mfa_satisfied,
        };
        inner.sessions.insert(session_id, session.clone());
        session
    }

    pub fn get(&self, session_id: &str) -> Option<AuthSession> {
        self.inner.read().sessions.get(session_id).cloned()
    }

    /// Confirms the session is one we issued, unexpired and unrevoked, and
    /// returns the stored record (never the caller's copy).
    pub fn check(&self, session_id: &str, now: Timestamp) -> Result<AuthSession, SessionError> {
        let inner = self.inner.read();
        let session = inner.sessions.get(session_id).ok_or(SessionError::Unknown)?;
        if inner.revoked.contains(session_id) {
            return Err(SessionError::Revoked);
        }
        if now >= session.expires_at {
            return Err(SessionError::Expired);
        }
        Ok(session.clone())
    }

    pub fn revoke(&self, session_id: &str) -> bool {
        let mut inner = self.inner.write();
        if !inner.sessions.contains_key(session_id) {
            return false;
        }
        inner.revoked.insert(session_id.to_owned());
        true
    }

    /// Revokes every session of `persistent_id`, returning their ids.
    pub fn revoke_all_for(&self, persistent_id: &str) -> Vec<String> {
        let mut inner = self.inner.write();
        let ids: Vec<String> = inner
            .sessions
            .values()
            .filter(|s| s.persistent_id == persistent_id)
            .map(|s| s.session_id.clone())
            .collect();
        inner.revoked.extend(ids.iter().cloned());
        ids
    }

    pub fn is_revoked(&self, session_id: &str) -> bool {
        self.inner.read().revoked.contains(session_id)
    }

    pub fn len(&self) -> usize {
        self.inner.read().sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
