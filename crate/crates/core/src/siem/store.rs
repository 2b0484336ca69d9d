//! Append-only event store: one JSON-lines file per source domain, with the
//! events also held in memory for rule evaluation and export.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::audit::{AuditDraft, AuditEvent, AuditSink, SourceDomain};
use crate::clock::{Clock, Timestamp};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub quarantined: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quarantined {
    pub reason: String,
    pub raw: String,
}

#[derive(Default)]
struct DomainLog {
    events: Vec<AuditEvent>,
    last: Option<Timestamp>,
    file: Option<File>,
}

pub struct EventStore {
    dir: Option<PathBuf>,
    domains: BTreeMap<SourceDomain, Mutex<DomainLog>>,
    quarantine: Mutex<(Vec<Quarantined>, Option<File>)>,
    // Lets readers take a consistent snapshot across domains without
    // holding up appends for long.
    epoch: RwLock<()>,
}

impl std::fmt::Debug for EventStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventStore").field("dir", &self.dir).finish_non_exhaustive()
    }
}

fn domain_file(dir: &Path, domain: SourceDomain) -> PathBuf {
    dir.join(format!("{}.jsonl", domain.as_str().to_ascii_lowercase()))
}

fn append_line(file: &mut Option<File>, line: &str) {
    if let Some(f) = file {
        if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
            tracing::error!(error = %e, "audit store write failed");
        }
    }
}

impl EventStore {
    pub fn in_memory() -> Self {
        EventStore {
            dir: None,
            domains: SourceDomain::ALL.iter().map(|d| (*d, Mutex::new(DomainLog::default()))).collect(),
            quarantine: Mutex::new((Vec::new(), None)),
            epoch: RwLock::new(()),
        }
    }

    /// Opens (or creates) the store under `dir`, replaying existing files.
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut domains = BTreeMap::new();
        for domain in SourceDomain::ALL {
            let path = domain_file(&dir, domain);
            let mut log = DomainLog::default();
            if path.exists() {
                for line in BufReader::new(File::open(&path)?).lines() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let event: AuditEvent = serde_json::from_str(&line)
                        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
                    log.last = Some(event.timestamp);
                    log.events.push(event);
                }
            }
            log.file = Some(OpenOptions::new().create(true).append(true).open(&path)?);
            domains.insert(domain, Mutex::new(log));
        }
        let qpath = dir.join("quarantine.jsonl");
        let mut quarantined = Vec::new();
        if qpath.exists() {
            for line in BufReader::new(File::open(&qpath)?).lines() {
                if let Ok(q) = serde_json::from_str::<Quarantined>(&line?) {
                    quarantined.push(q);
                }
            }
        }
        let qfile = OpenOptions::new().create(true).append(true).open(&qpath)?;
        Ok(EventStore {
            dir: Some(dir),
            domains,
            quarantine: Mutex::new((quarantined, Some(qfile))),
            epoch: RwLock::new(()),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn quarantine(&self, raw: String, reason: &str) {
        let q = Quarantined {
            reason: reason.to_owned(),
            raw,
        };
        let mut guard = self.quarantine.lock();
        append_line(&mut guard.1, &serde_json::to_string(&q).expect("serializable"));
        guard.0.push(q);
    }

    /// Appends one event, quarantining it if it would move its domain's
    /// clock backwards.
    pub fn append(&self, event: AuditEvent) -> bool {
        let _epoch = self.epoch.read();
        let mut log = self.domains[&event.source_domain].lock();
        if log.last.is_some_and(|last| event.timestamp < last) {
            drop(log);
            self.quarantine(serde_json::to_string(&event).expect("serializable"), "timestamp regression");
            return false;
        }
        append_line(&mut log.file, &serde_json::to_string(&event).expect("serializable"));
        log.last = Some(event.timestamp);
        log.events.push(event);
        true
    }

    /// Stamps a draft with `now`, or the domain's last timestamp if the
    /// clock has gone backwards, and appends it.
    pub fn append_draft(&self, draft: AuditDraft, now: Timestamp) -> AuditEvent {
        let _epoch = self.epoch.read();
        let mut log = self.domains[&draft.source_domain].lock();
        let ts = log.last.map_or(now, |last| last.max(now));
        let event = draft.stamp(ts);
        append_line(&mut log.file, &serde_json::to_string(&event).expect("serializable"));
        log.last = Some(ts);
        log.events.push(event.clone());
        event
    }

    /// Batch ingest of raw JSON values. Anything that is not a well-formed
    /// event is quarantined; nothing is dropped.
    pub fn ingest<I>(&self, batch: I) -> IngestReport
    where
        I: IntoIterator<Item = serde_json::Value>,
    {
        let mut report = IngestReport::default();
        for value in batch {
            match serde_json::from_value::<AuditEvent>(value.clone()) {
                Ok(event) => {
                    if self.append(event) {
                        report.accepted += 1;
                    } else {
                        report.quarantined += 1;
                    }
                }
                Err(e) => {
                    self.quarantine(value.to_string(), &format!("malformed: {e}"));
                    report.quarantined += 1;
                }
            }
        }
        report
    }

    /// Ingests a JSON-lines document. Lines that are not JSON at all are
    /// quarantined too.
    pub fn ingest_jsonl(&self, text: &str) -> IngestReport {
        let mut report = IngestReport::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<serde_json::Value>(line) {
                Ok(v) => {
                    let r = self.ingest([v]);
                    report.accepted += r.accepted;
                    report.quarantined += r.quarantined;
                }
                Err(_) => {
                    self.quarantine(line.to_owned(), "malformed: not JSON");
                    report.quarantined += 1;
                }
            }
        }
        report
    }

    /// All stored events in timestamp order, domains interleaved in
    /// domain order on ties.
    pub fn snapshot(&self) -> Vec<AuditEvent> {
        let _epoch = self.epoch.write();
        let mut all: Vec<AuditEvent> = self.domains.values().flat_map(|d| d.lock().events.clone()).collect();
        all.sort_by_key(|e| e.timestamp);
        all
    }

    pub fn len(&self) -> usize {
        self.domains.values().map(|d| d.lock().events.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn domain_len(&self, domain: SourceDomain) -> usize {
        self.domains[&domain].lock().events.len()
    }

    pub fn quarantined(&self) -> Vec<Quarantined> {
        self.quarantine.lock().0.clone()
    }
}

/// The audit sink every service writes through.
pub struct SiemSink {
    store: Arc<EventStore>,
    clock: Arc<dyn Clock>,
}

impl SiemSink {
    pub fn new(store: Arc<EventStore>, clock: Arc<dyn Clock>) -> Self {
        SiemSink { store, clock }
    }
}

impl AuditSink for SiemSink {
    fn emit(&self, draft: AuditDraft) {
        self.store.append_draft(draft, self.clock.now());
    }
}
