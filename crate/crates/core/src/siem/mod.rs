//! Security operations: event aggregation, alerting, software inventory
//! against advisories, configuration assessment and the restricted export
//! handed to an outside monitoring provider.

pub mod assess;
pub mod inventory;
pub mod rules;
pub mod store;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde_json::Value;

pub use assess::{run_config_assessment, Assessment, ComplianceFinding, ConfigCheck, FindingStatus};
pub use inventory::{match_advisories, Advisory, InventoryRecord, InventorySnapshot, Vulnerable};
pub use rules::{evaluate_alert_rules, Alert, AlertRule, GroupBy};
pub use store::{EventStore, IngestReport, Quarantined, SiemSink};

use crate::audit::AuditEvent;
use crate::clock::Timestamp;

/// Fields an export carries unless configured otherwise. Actor and attrs are
/// left out on purpose.
pub const DEFAULT_EXPORT_FIELDS: [&str; 4] = ["timestamp", "action", "outcome", "source_domain"];

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum SiemError {
    #[error("malformed advisory {0}")]
    MalformedAdvisory(String),
    #[error("unknown host {0}")]
    UnknownHost(String),
    #[error("invalid alert rule {0}")]
    InvalidRule(String),
    #[error("malformed check {0}")]
    MalformedCheck(String),
    #[error("duplicate inventory entry for {package} on {host_id}")]
    DuplicateInventory { host_id: String, package: String },
}

impl SiemError {
    pub fn code(&self) -> &'static str {
        match self {
            SiemError::MalformedAdvisory(_) => "MalformedAdvisory",
            SiemError::UnknownHost(_) => "UnknownHost",
            SiemError::InvalidRule(_) => "InvalidRule",
            SiemError::MalformedCheck(_) => "MalformedCheck",
            SiemError::DuplicateInventory { .. } => "DuplicateInventory",
        }
    }
}

/// Keeps only allowlisted top-level fields of an event.
pub fn export_event(event: &AuditEvent, fields: &[String]) -> Value {
    let full = serde_json::to_value(event).expect("serializable");
    let mut out = serde_json::Map::new();
    for f in fields {
        if let Some(v) = full.get(f) {
            out.insert(f.clone(), v.clone());
        }
    }
    Value::Object(out)
}

pub struct Siem {
    store: Arc<EventStore>,
    rules: RwLock<Vec<AlertRule>>,
    inventory: RwLock<InventorySnapshot>,
    advisories: RwLock<Vec<Advisory>>,
    host_configs: RwLock<BTreeMap<String, Value>>,
    checks: RwLock<Vec<ConfigCheck>>,
    export_fields: RwLock<Vec<String>>,
    alerts_file: Mutex<Option<std::fs::File>>,
}

impl std::fmt::Debug for Siem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Siem").field("store", &self.store).finish_non_exhaustive()
    }
}

impl Siem {
    pub fn new(store: Arc<EventStore>) -> Self {
        let alerts_file = store.dir().and_then(|d| {
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(d.join("alerts.jsonl"))
                .ok()
        });
        Siem {
            store,
            rules: RwLock::new(Vec::new()),
            inventory: RwLock::new(InventorySnapshot::default()),
            advisories: RwLock::new(Vec::new()),
            host_configs: RwLock::new(BTreeMap::new()),
            checks: RwLock::new(Vec::new()),
            export_fields: RwLock::new(DEFAULT_EXPORT_FIELDS.iter().map(|s| s.to_string()).collect()),
            alerts_file: Mutex::new(alerts_file),
        }
    }

    pub fn store(&self) -> &Arc<EventStore> {
        &self.store
    }

    pub fn ingest<I: IntoIterator<Item = Value>>(&self, batch: I) -> IngestReport {
        self.store.ingest(batch)
    }

    pub fn set_rules(&self, rules: Vec<AlertRule>) -> Result<(), SiemError> {
        rules.iter().try_for_each(AlertRule::validate)?;
        *self.rules.write() = rules;
        Ok(())
    }

    pub fn rules(&self) -> Vec<AlertRule> {
        self.rules.read().clone()
    }

    pub fn evaluate_alert_rules(&self, now: Timestamp) -> Vec<Alert> {
        let rules = self.rules.read().clone();
        evaluate_alert_rules(&self.store.snapshot(), &rules, now)
    }

    /// Evaluates and appends the result to the local alerts file.
    pub fn raise_alerts(&self, now: Timestamp) -> Vec<Alert> {
        let alerts = self.evaluate_alert_rules(now);
        if let Some(f) = self.alerts_file.lock().as_mut() {
            for a in &alerts {
                let _ = writeln!(f, "{}", serde_json::to_string(a).expect("serializable"));
            }
            let _ = f.flush();
        }
        alerts
    }

    pub fn set_inventory(&self, records: Vec<InventoryRecord>) -> Result<usize, SiemError> {
        let snapshot = InventorySnapshot::new(records)?;
        let n = snapshot.records().len();
        *self.inventory.write() = snapshot;
        Ok(n)
    }

    pub fn set_advisories(&self, advisories: Vec<Advisory>) -> Result<(), SiemError> {
        match_advisories(&InventorySnapshot::default(), &advisories)?;
        *self.advisories.write() = advisories;
        Ok(())
    }

    pub fn vulnerable(&self) -> Result<Vec<Vulnerable>, SiemError> {
        match_advisories(&self.inventory.read(), &self.advisories.read())
    }

    pub fn set_host_config(&self, host_id: &str, document: Value) {
        self.host_configs.write().insert(host_id.to_owned(), document);
    }

    pub fn set_checks(&self, checks: Vec<ConfigCheck>) {
        *self.checks.write() = checks;
    }

    /// Assesses the named hosts, or every known host.
    pub fn assess(&self, hosts: Option<&[String]>) -> Result<Assessment, SiemError> {
        let configs = self.host_configs.read();
        let all: Vec<String> = configs.keys().cloned().collect();
        run_config_assessment(hosts.unwrap_or(&all), &configs, &self.checks.read())
    }

    pub fn set_export_fields(&self, fields: Vec<String>) {
        *self.export_fields.write() = fields;
    }

    pub fn export(&self) -> Vec<Value> {
        let fields = self.export_fields.read().clone();
        self.store.snapshot().iter().map(|e| export_event(e, &fields)).collect()
    }
}
