//! Audit events emitted by every decision point in the control plane.
//!
//! Services build an [`AuditDraft`] and hand it to an [`AuditSink`]; the sink
//! stamps the time under its own lock so that timestamps stay monotone per
//! source domain even when many threads emit at once.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, Timestamp};
use crate::ids;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceDomain {
    #[serde(rename = "MDC")]
    Mdc,
    #[serde(rename = "SWS")]
    Sws,
    #[serde(rename = "FDS")]
    Fds,
    #[serde(rename = "SEC")]
    Sec,
}

impl SourceDomain {
    pub const ALL: [SourceDomain; 4] = [
        SourceDomain::Mdc,
        SourceDomain::Sws,
        SourceDomain::Fds,
        SourceDomain::Sec,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceDomain::Mdc => "MDC",
            SourceDomain::Sws => "SWS",
            SourceDomain::Fds => "FDS",
            SourceDomain::Sec => "SEC",
        }
    }
}

impl fmt::Display for SourceDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Allow,
    Deny,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub timestamp: Timestamp,
    pub source_domain: SourceDomain,
    /// Persistent id of the acting identity, or `anonymous`.
    pub actor: String,
    /// Dotted verb such as `token.issue`.
    pub action: String,
    pub outcome: Outcome,
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
    pub request_id: String,
}

pub const ANONYMOUS: &str = "anonymous";

/// An event before the sink has stamped it.
#[derive(Clone, Debug)]
pub struct AuditDraft {
    pub source_domain: SourceDomain,
    pub actor: String,
    pub action: String,
    pub outcome: Outcome,
    pub attrs: BTreeMap<String, String>,
    pub request_id: String,
}

impl AuditDraft {
    pub fn stamp(self, timestamp: Timestamp) -> AuditEvent {
        AuditEvent {
            timestamp,
            source_domain: self.source_domain,
            actor: self.actor,
            action: self.action,
            outcome: self.outcome,
            attrs: self.attrs,
            request_id: self.request_id,
        }
    }
}

pub trait AuditSink: Send + Sync {
    fn emit(&self, draft: AuditDraft);
}

thread_local! {
    static REQUEST_ID: RefCell<Option<String>> = const { RefCell::new(None) };
}

/// Runs `f` with `request_id` attached to every audit event emitted on this
/// thread while it runs.
pub fn with_request_id<R>(request_id: &str, f: impl FnOnce() -> R) -> R {
    let previous = REQUEST_ID.with(|slot| slot.replace(Some(request_id.to_owned())));
    let out = f();
    REQUEST_ID.with(|slot| *slot.borrow_mut() = previous);
    out
}

pub fn current_request_id() -> Option<String> {
    REQUEST_ID.with(|slot| slot.borrow().clone())
}

/// Per-service handle onto the shared sink.
#[derive(Clone)]
pub struct Auditor {
    domain: SourceDomain,
    sink: Arc<dyn AuditSink>,
}

impl fmt::Debug for Auditor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Auditor").field("domain", &self.domain).finish()
    }
}

impl Auditor {
    pub fn new(domain: SourceDomain, sink: Arc<dyn AuditSink>) -> Self {
        Auditor { domain, sink }
    }

    pub fn domain(&self) -> SourceDomain {
        self.domain
    }

    pub fn record<I, K, V>(&self, actor: &str, action: &str, outcome: Outcome, attrs: I)
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let request_id = current_request_id().unwrap_or_else(|| ids::prefixed("local", 9));
        self.sink.emit(AuditDraft {
            source_domain: self.domain,
            actor: actor.to_owned(),
            action: action.to_owned(),
            outcome,
            attrs: attrs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
            request_id,
        });
    }

    pub fn allow<I, K, V>(&self, actor: &str, action: &str, attrs: I)
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        self.record(actor, action, Outcome::Allow, attrs)
    }

    /// Records a denial with the machine-readable error code under `reason`.
    pub fn deny<I, K, V>(&self, actor: &str, action: &str, reason: &str, attrs: I)
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut all: BTreeMap<String, String> =
            attrs.into_iter().map(|(k, v)| (k.into(), v.into())).collect();
        all.insert("reason".into(), reason.into());
        self.record(actor, action, Outcome::Deny, all)
    }
}

/// In-memory sink, mostly for unit tests.
pub struct MemorySink {
    clock: Arc<dyn Clock>,
    events: Mutex<Vec<AuditEvent>>,
}

impl MemorySink {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        MemorySink {
            clock,
            events: Mutex::new(Vec::new()),
        }
    }

    pub fn events(&self) -> Vec<AuditEvent> {
        self.events.lock().clone()
    }

    pub fn len(&self) -> usize {
        self.events.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl AuditSink for MemorySink {
    fn emit(&self, draft: AuditDraft) {
        let mut events = self.events.lock();
        events.push(draft.stamp(self.clock.now()));
    }
}
