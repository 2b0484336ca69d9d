//! Device-style login: a client without a browser shows a short code, the
//! user approves it from a logged-in browser session, and the client polls
//! until it receives a session of its own.

use std::collections::HashMap;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::session::AuthSession;
use crate::clock::Timestamp;
use crate::ids;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceGrant {
    pub device_code: String,
    pub user_code: String,
    pub verification_uri: String,
    pub expires_at: Timestamp,
    pub interval_secs: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DevicePoll {
    Pending,
    Approved { session: AuthSession },
    Expired,
    /// Unknown device code, or the session was already collected.
    Invalid,
}

#[derive(Debug)]
struct Pending {
    user_code: String,
    expires_at: Timestamp,
    session: Option<AuthSession>,
}

#[derive(Debug)]
pub struct DeviceFlows {
    ttl: Duration,
    verification_uri: String,
    grants: Mutex<HashMap<String, Pending>>,
}

#[derive(Debug, PartialEq, Eq)]
pub struct UnknownUserCode;

impl DeviceFlows {
    pub fn new(ttl: Duration, verification_uri: String) -> Self {
        DeviceFlows {
            ttl,
            verification_uri,
            grants: Mutex::new(HashMap::new()),
        }
    }

    pub fn start(&self, now: Timestamp) -> DeviceGrant {
        let mut grants = self.grants.lock();
        grants.retain(|_, g| now < g.expires_at);
        let user_code = loop {
            let code = ids::user_code();
            if !grants.values().any(|g| g.user_code == code) {
                break code;
            }
        };
        let device_code = ids::prefixed("dev", 24);
        let expires_at = now + self.ttl;
        grants.insert(
            device_code.clone(),
            Pending {
                user_code: user_code.clone(),
                expires_at,
                session: None,
            },
        );
        DeviceGrant {
            device_code,
            user_code,
            verification_uri: self.verification_uri.clone(),
            expires_at,
            interval_secs: 1,
        }
    }

    pub fn approve(&self, user_code: &str, session: AuthSession, now: Timestamp) -> Result<(), UnknownUserCode> {
        let wanted = user_code.trim().to_uppercase();
        let mut grants = self.grants.lock();
        let grant = grants
            .values_mut()
            .find(|g| g.user_code == wanted && now < g.expires_at && g.session.is_none())
            .ok_or(UnknownUserCode)?;
        grant.session = Some(session);
        Ok(())
    }

    pub fn poll(&self, device_code: &str, now: Timestamp) -> DevicePoll {
        let mut grants = self.grants.lock();
        let Some(grant) = grants.get(device_code) else {
            return DevicePoll::Invalid;
        };
        if grant.session.is_some() {
            let grant = grants.remove(device_code).expect("present");
            return DevicePoll::Approved {
                session: grant.session.expect("approved"),
            };
        }
        if now >= grant.expires_at {
            grants.remove(device_code);
            return DevicePoll::Expired;
        }
        DevicePoll::Pending
    }
}
