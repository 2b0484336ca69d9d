//! Scripted scenarios. Each step names an actor, an operation and the
//! outcome the script expects, plus the audited decisions the operation is
//! supposed to make. The runner tags every step with its own request id so
//! the SIEM events it caused can be pulled back out afterwards.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use gatekeep_core::audit::{with_request_id, AuditEvent};
use gatekeep_core::broker::BrokerError;
use gatekeep_core::gateway::GatewayError;
use gatekeep_core::registry::RegistryError;
use gatekeep_core::siem::EventStore;
use gatekeep_core::sshca::CaError;
use gatekeep_core::token::TokenError;
use serde::{Deserialize, Serialize};

/// Turns a service error into the outcome code scripts compare against.
/// Wrapped token errors keep their inner code after a slash.
pub trait Coded {
    fn outcome_code(&self) -> String;
}

impl Coded for TokenError {
    fn outcome_code(&self) -> String {
        self.code().to_owned()
    }
}

impl Coded for BrokerError {
    fn outcome_code(&self) -> String {
        self.code().to_owned()
    }
}

impl Coded for RegistryError {
    fn outcome_code(&self) -> String {
        self.code().to_owned()
    }
}

impl Coded for CaError {
    fn outcome_code(&self) -> String {
        match self {
            CaError::TokenInvalid(t) => format!("TokenInvalid/{}", t.code()),
            other => other.code().to_owned(),
        }
    }
}

impl Coded for GatewayError {
    fn outcome_code(&self) -> String {
        match self {
            GatewayError::TokenInvalid(t) => format!("TokenInvalid/{}", t.code()),
            GatewayError::CertificateRejected(r) => format!("CertificateRejected/{r}"),
            other => other.code().to_owned(),
        }
    }
}

pub fn code<E: Coded>(e: E) -> String {
    e.outcome_code()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "code", rename_all = "lowercase")]
pub enum Expect {
    Allow,
    Deny(String),
}

impl Expect {
    pub fn deny(code: &str) -> Expect {
        Expect::Deny(code.to_owned())
    }
}

impl std::fmt::Display for Expect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Expect::Allow => f.write_str("allow"),
            Expect::Deny(c) => write!(f, "deny:{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSummary {
    pub domain: String,
    pub actor: String,
    pub action: String,
    pub outcome: String,
}

impl From<&AuditEvent> for EventSummary {
    fn from(e: &AuditEvent) -> Self {
        EventSummary {
            domain: e.source_domain.as_str().to_owned(),
            actor: e.actor.clone(),
            action: e.action.clone(),
            outcome: serde_json::to_value(e.outcome)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
        }
    }
}

/// One line of a transcript.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub story: u8,
    pub index: usize,
    pub actor: String,
    pub op: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
    pub request_id: String,
    /// Audited decisions the operation should make, by action name.
    pub expected_events: Vec<String>,
    pub events: Vec<EventSummary>,
    /// The step's events match `expected_events` as a multiset.
    pub parity: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Transcript {
    pub story: u8,
    pub title: String,
    pub steps: Vec<StepRecord>,
    /// Set when a step that later steps depend on failed.
    pub aborted_at: Option<usize>,
    /// Events carrying this run's request ids that no step accounts for.
    pub unattributed: usize,
    pub elapsed_ms: u128,
}

impl Transcript {
    pub fn deviations(&self) -> Vec<&StepRecord> {
        self.steps.iter().filter(|s| !s.pass || !s.parity).collect()
    }

    pub fn passed(&self) -> bool {
        self.aborted_at.is_none() && self.unattributed == 0 && self.deviations().is_empty()
    }

    /// Audited operations the script performed.
    pub fn operation_count(&self) -> usize {
        self.steps.iter().map(|s| s.expected_events.len()).sum()
    }

    pub fn event_count(&self) -> usize {
        self.steps.iter().map(|s| s.events.len()).sum()
    }

    pub fn to_jsonl(&self) -> String {
        self.steps
            .iter()
            .map(|s| serde_json::to_string(s).expect("serializable") + "\n")
            .collect()
    }

    pub fn first_failure(&self) -> Option<ScenarioFailed> {
        if let Some(s) = self.deviations().first() {
            return Some(ScenarioFailed {
                step: s.index,
                expected: s.expected.clone(),
                actual: if s.pass {
                    format!("events {:?}", s.events.iter().map(|e| &e.action).collect::<Vec<_>>())
                } else {
                    s.actual.clone()
                },
            });
        }
        if self.unattributed > 0 {
            return Some(ScenarioFailed {
                step: self.steps.len(),
                expected: "every event attributed to a step".into(),
                actual: format!("{} stray events", self.unattributed),
            });
        }
        self.aborted_at.map(|step| ScenarioFailed {
            step,
            expected: "continue".into(),
            actual: "aborted".into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("step {step}: expected {expected}, got {actual}")]
pub struct ScenarioFailed {
    pub step: usize,
    pub expected: String,
    pub actual: String,
}

/// Drives one script. `prefix` keeps request ids unique when several
/// runners share a platform.
pub struct Runner {
    story: u8,
    title: String,
    prefix: String,
    steps: Vec<StepRecord>,
    aborted_at: Option<usize>,
    started: Instant,
}

impl Runner {
    pub fn new(story: u8, title: &str, prefix: &str) -> Self {
        Runner {
            story,
            title: title.to_owned(),
            prefix: prefix.to_owned(),
            steps: Vec::new(),
            aborted_at: None,
            started: Instant::now(),
        }
    }

    /// Runs `f` and records the outcome. None means the step deviated from
    /// the script; otherwise the inner value is present when `f` succeeded.
    pub fn step<T>(
        &mut self,
        actor: &str,
        op: &str,
        expect: Expect,
        audited: &[&str],
        f: impl FnOnce() -> Result<T, String>,
    ) -> Option<Option<T>> {
        let index = self.steps.len();
        let request_id = format!("{}-s{}-{index:03}", self.prefix, self.story);
        let result = with_request_id(&request_id, f);
        let actual = match &result {
            Ok(_) => Expect::Allow,
            Err(c) => Expect::Deny(c.clone()),
        };
        let pass = actual == expect;
        self.steps.push(StepRecord {
            story: self.story,
            index,
            actor: actor.to_owned(),
            op: op.to_owned(),
            expected: expect.to_string(),
            actual: actual.to_string(),
            pass,
            request_id,
            expected_events: audited.iter().map(|s| s.to_string()).collect(),
            events: Vec::new(),
            parity: false,
        });
        pass.then(|| result.ok())
    }

    /// A state assertion. Makes no audited decisions.
    pub fn check(&mut self, actor: &str, what: &str, holds: impl FnOnce() -> Result<(), String>) -> Option<()> {
        self.step(actor, &format!("check {what}"), Expect::Allow, &[], holds).flatten()
    }

    /// Marks the run as cut short; the caller returns after this.
    pub fn abort(&mut self) {
        self.aborted_at.get_or_insert(self.steps.len());
    }

    /// Attaches each step's events from `store` and closes the transcript.
    pub fn finish(self, store: &EventStore) -> Transcript {
        let mut by_rid: BTreeMap<String, Vec<EventSummary>> = BTreeMap::new();
        for e in store.snapshot() {
            if e.request_id.starts_with(&format!("{}-s", self.prefix)) {
                by_rid.entry(e.request_id.clone()).or_default().push(EventSummary::from(&e));
            }
        }
        let steps: Vec<StepRecord> = self
            .steps
            .into_iter()
            .map(|mut s| {
                s.events = by_rid.remove(&s.request_id).unwrap_or_default();
                let mut want = s.expected_events.clone();
                let mut got: Vec<String> = s.events.iter().map(|e| e.action.clone()).collect();
                want.sort();
                got.sort();
                s.parity = want == got;
                s
            })
            .collect();
        Transcript {
            story: self.story,
            title: self.title,
            steps,
            aborted_at: self.aborted_at,
            unattributed: by_rid.values().map(Vec::len).sum(),
            elapsed_ms: self.started.elapsed().as_millis(),
        }
    }

    pub fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }
}
