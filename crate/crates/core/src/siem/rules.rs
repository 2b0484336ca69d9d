//! Threshold alert rules over a sliding window.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SiemError;
use crate::audit::{AuditEvent, Outcome};
use crate::clock::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    Actor,
    Source,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertRule {
    pub rule_id: String,
    /// Action glob; `*` matches any run of characters.
    pub action: String,
    #[serde(default)]
    pub outcome: Option<Outcome>,
    pub window_secs: u64,
    pub threshold: usize,
    pub group_by: GroupBy,
}

impl AlertRule {
    pub fn validate(&self) -> Result<(), SiemError> {
        if self.threshold < 1 || self.window_secs == 0 || self.rule_id.is_empty() {
            return Err(SiemError::InvalidRule(self.rule_id.clone()));
        }
        Ok(())
    }

    pub fn matches(&self, event: &AuditEvent) -> bool {
        self.outcome.is_none_or(|o| o == event.outcome) && glob_match(&self.action, &event.action)
    }

    fn group(&self, event: &AuditEvent) -> String {
        match self.group_by {
            GroupBy::Actor => event.actor.clone(),
            GroupBy::Source => event.source_domain.as_str().to_owned(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub rule_id: String,
    pub group: String,
    pub count: usize,
    pub window_start: Timestamp,
    pub window_end: Timestamp,
}

pub(crate) fn glob_match(pattern: &str, text: &str) -> bool {
    let (p, t) = (pattern.as_bytes(), text.as_bytes());
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && p[pi] == b'*' {
            star = Some((pi, ti));
            pi += 1;
        } else if pi < p.len() && p[pi] == t[ti] {
            pi += 1;
            ti += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == b'*')
}

/// One alert per (rule, group) with at least `threshold` matching events in
/// `[now - window, now]`. Output is ordered by rule, then group.
pub fn evaluate_alert_rules(events: &[AuditEvent], rules: &[AlertRule], now: Timestamp) -> Vec<Alert> {
    let mut alerts = Vec::new();
    for rule in rules {
        let start = Timestamp(now.0.saturating_sub(rule.window_secs as i64));
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for e in events {
            if e.timestamp >= start && e.timestamp <= now && rule.matches(e) {
                *counts.entry(rule.group(e)).or_default() += 1;
            }
        }
        alerts.extend(counts.into_iter().filter(|(_, n)| *n >= rule.threshold).map(|(group, count)| Alert {
            rule_id: rule.rule_id.clone(),
            group,
            count,
            window_start: start,
            window_end: now,
        }));
    }
    alerts
}
