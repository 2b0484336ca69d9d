use ed25519_dalek::VerifyingKey;
use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::crypto::{self, KeyPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyState {
    Active,
    Retired,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedKey {
    pub key_id: String,
    pub public_key: String,
    pub created_at: Timestamp,
    pub state: KeyState,
}

#[derive(Debug)]
struct Entry {
    key: KeyPair,
    created_at: Timestamp,
    state: KeyState,
    /// Latest `exp` of any token signed with this key.
    last_exp: Timestamp,
}

/// Exactly one active key. Retired keys verify until the last token they
/// signed has expired, then they are dropped.
#[derive(Debug)]
pub struct KeyRing {
    keys: Vec<Entry>,
}

impl KeyRing {
    pub fn new(initial: KeyPair, now: Timestamp) -> Self {
        KeyRing {
            keys: vec![Entry {
                key: initial,
                created_at: now,
                state: KeyState::Active,
                last_exp: now,
            }],
        }
    }

    fn active_entry(&mut self) -> &mut Entry {
        self.keys
            .iter_mut()
            .find(|e| e.state == KeyState::Active)
            .expect("key ring always has an active key")
    }

    pub fn active(&self) -> &KeyPair {
        &self
            .keys
            .iter()
            .find(|e| e.state == KeyState::Active)
            .expect("key ring always has an active key")
            .key
    }

    /// Records that the active key signed a token expiring at `exp`.
    pub fn note_signed(&mut self, exp: Timestamp) {
        let entry = self.active_entry();
        entry.last_exp = entry.last_exp.max(exp);
    }

    pub fn rotate(&mut self, next: KeyPair, now: Timestamp) -> String {
        self.active_entry().state = KeyState::Retired;
        let key_id = next.key_id().to_owned();
        self.keys.push(Entry {
            key: next,
            created_at: now,
            state: KeyState::Active,
            last_exp: now,
        });
        key_id
    }

    pub fn prune(&mut self, now: Timestamp) {
        self.keys.retain(|e| e.state == KeyState::Active || now < e.last_exp);
    }

    pub fn verifying_key(&self, key_id: &str, now: Timestamp) -> Option<VerifyingKey> {
        self.keys
            .iter()
            .find(|e| e.key.key_id() == key_id && (e.state == KeyState::Active || now < e.last_exp))
            .map(|e| e.key.public())
    }

    pub fn published(&self, now: Timestamp) -> Vec<PublishedKey> {
        self.keys
            .iter()
            .filter(|e| e.state == KeyState::Active || now < e.last_exp)
            .map(|e| PublishedKey {
                key_id: e.key.key_id().to_owned(),
                public_key: crypto::b64(&e.key.public_bytes()),
                created_at: e.created_at,
                state: e.state,
            })
            .collect()
    }
}
