use std::collections::BTreeMap;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::token::KillSwitchProbe;

/// Service name the bastion checks kill switches under.
pub const BASTION_SERVICE: &str = "bastion";
/// Audience used to operate the switches. Never blocked, so an engaged
/// global switch can still be released.
pub const KILLSWITCH_AUDIENCE: &str = "mgmt:killswitch";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum KillScope {
    User { persistent_id: String },
    Service { service_id: String },
    Global,
}

impl std::fmt::Display for KillScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KillScope::User { persistent_id } => write!(f, "user:{persistent_id}"),
            KillScope::Service { service_id } => write!(f, "service:{service_id}"),
            KillScope::Global => f.write_str("global"),
        }
    }
}

impl std::str::FromStr for KillScope {
    type Err = String;

    /// `global`, `user:<persistent_id>` or `service:<service_id>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "global" {
            return Ok(KillScope::Global);
        }
        match s.split_once(':') {
            Some(("user", id)) if !id.is_empty() => Ok(KillScope::User {
                persistent_id: id.to_owned(),
            }),
            Some(("service", id)) if !id.is_empty() => Ok(KillScope::Service {
                service_id: id.to_owned(),
            }),
            _ => Err(format!("unknown kill-switch scope `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchState {
    Engaged,
    Released,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KillSwitch {
    #[serde(flatten)]
    pub scope: KillScope,
    pub engaged_at: Timestamp,
    pub engaged_by: String,
    pub state: SwitchState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub released_at: Option<Timestamp>,
}

/// Current switch positions. A decision reads it once.
#[derive(Debug, Default)]
pub struct KillSwitchBoard {
    switches: RwLock<BTreeMap<KillScope, KillSwitch>>,
}

impl KillSwitchBoard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn engage(&self, scope: KillScope, by: &str, now: Timestamp) -> KillSwitch {
        let switch = KillSwitch {
            scope: scope.clone(),
            engaged_at: now,
            engaged_by: by.to_owned(),
            state: SwitchState::Engaged,
            released_at: None,
        };
        self.switches.write().insert(scope, switch.clone());
        switch
    }

    /// None if the scope was never engaged.
    pub fn release(&self, scope: &KillScope, now: Timestamp) -> Option<KillSwitch> {
        let mut switches = self.switches.write();
        let switch = switches.get_mut(scope)?;
        switch.state = SwitchState::Released;
        switch.released_at = Some(now);
        Some(switch.clone())
    }

    pub fn list(&self) -> Vec<KillSwitch> {
        self.switches.read().values().cloned().collect()
    }

    pub fn is_engaged(&self, scope: &KillScope) -> bool {
        self.switches
            .read()
            .get(scope)
            .is_some_and(|s| s.state == SwitchState::Engaged)
    }

    /// True when `sub` may not reach `service`. Any engaged scope that covers
    /// the request denies it.
    pub fn blocks_request(&self, sub: Option<&str>, service: &str) -> bool {
        if service == KILLSWITCH_AUDIENCE {
            return false;
        }
        let switches = self.switches.read();
        let engaged = |scope: &KillScope| switches.get(scope).is_some_and(|s| s.state == SwitchState::Engaged);
        engaged(&KillScope::Global)
            || engaged(&KillScope::Service {
                service_id: service.to_owned(),
            })
            || sub.is_some_and(|sub| {
                engaged(&KillScope::User {
                    persistent_id: sub.to_owned(),
                })
            })
    }
}

impl KillSwitchProbe for KillSwitchBoard {
    fn blocks(&self, sub: &str, service: &str) -> bool {
        self.blocks_request(Some(sub), service)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user(id: &str) -> KillScope {
        KillScope::User {
            persistent_id: id.into(),
        }
    }

    #[test]
    fn scopes_parse() {
        assert_eq!("global".parse(), Ok(KillScope::Global));
        assert_eq!("user:abc".parse(), Ok(user("abc")));
        assert_eq!(
            "service:tunnel:jupyter".parse(),
            Ok(KillScope::Service {
                service_id: "tunnel:jupyter".into()
            })
        );
        assert!("user:".parse::<KillScope>().is_err());
        assert!("planet".parse::<KillScope>().is_err());
        for s in ["global", "user:x", "service:bastion"] {
            assert_eq!(s.parse::<KillScope>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn user_scope_only_hits_that_user() {
        let board = KillSwitchBoard::new();
        board.engage(user("x"), "admin", Timestamp(1));
        assert!(board.blocks("x", "ssh-ca"));
        assert!(board.blocks("x", BASTION_SERVICE));
        assert!(!board.blocks("y", "ssh-ca"));
        board.release(&user("x"), Timestamp(2)).unwrap();
        assert!(!board.blocks("x", "ssh-ca"));
        assert!(board.release(&user("never"), Timestamp(3)).is_none());
    }

    #[test]
    fn broader_scopes_dominate() {
        // For every request, the chain user(sub) < service(svc) < global of
        // scopes containing it denies at least as much at each step.
        for sub in ["a", "b"] {
            for svc in ["ssh-ca", "tunnel:jupyter", BASTION_SERVICE] {
                let chain = [
                    user(sub),
                    KillScope::Service { service_id: svc.into() },
                    KillScope::Global,
                ];
                let mut previous = false;
                for scope in chain {
                    let board = KillSwitchBoard::new();
                    board.engage(scope.clone(), "admin", Timestamp(0));
                    let denied = board.blocks(sub, svc);
                    assert!(denied || !previous, "{scope} allows {sub}/{svc}");
                    previous = denied;
                }
                assert!(previous);
            }
        }
    }

    #[test]
    fn global_blocks_everything_but_the_release_path() {
        let board = KillSwitchBoard::new();
        board.engage(KillScope::Global, "admin", Timestamp(0));
        assert!(board.blocks_request(None, BASTION_SERVICE));
        assert!(board.blocks("anyone", "portal"));
        assert!(!board.blocks("admin", KILLSWITCH_AUDIENCE));
    }
}
