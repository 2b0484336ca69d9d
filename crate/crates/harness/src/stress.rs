//! Many notebook sessions at once on one platform.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::env::Env;
use crate::scenario::Transcript;
use crate::stories::run_on;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StressReport {
    pub sessions: usize,
    pub succeeded: usize,
    /// Spawns or responses that named someone other than the caller.
    pub leaks: Vec<String>,
    pub operations: usize,
    pub events: usize,
    pub elapsed_ms: u128,
    #[serde(skip)]
    pub transcripts: Vec<Transcript>,
}

impl StressReport {
    pub fn passed(&self) -> bool {
        self.succeeded == self.sessions && self.leaks.is_empty() && self.operations == self.events
    }
}

/// Runs `sessions` copies of the notebook story concurrently, each from its
/// own source address, then checks that every spawn belongs to the session
/// that caused it.
pub fn run_stress(sessions: usize) -> StressReport {
    let env = Env::new();
    env.register_jupyter();
    let started = Instant::now();
    let transcripts: Vec<Transcript> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..sessions)
            .map(|i| {
                let env = &env;
                scope.spawn(move || run_on(env, 6, &format!("stress{i:03}")).expect("story 6 exists"))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("session thread")).collect()
    });
    let elapsed_ms = started.elapsed().as_millis();

    let mut leaks = Vec::new();
    let mut owners: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for spawn in env.jupyter.spawns() {
        match env.p.sessions.get(&spawn.session_id) {
            Some(s) if s.persistent_id == spawn.persistent_id => {}
            _ => leaks.push(format!("spawn for session {} names {}", spawn.session_id, spawn.persistent_id)),
        }
        owners.entry(spawn.persistent_id.clone()).or_default().insert(spawn.session_id.clone());
    }
    for inv in env.jupyter.invocations() {
        if inv.header_present && !inv.header_validated {
            continue;
        }
        if !inv.header_validated {
            leaks.push(format!("unauthenticated request reached the backend at {}", inv.path));
        }
    }
    if owners.len() != sessions {
        leaks.push(format!("{} distinct notebook owners for {sessions} sessions", owners.len()));
    }
    StressReport {
        sessions,
        succeeded: transcripts.iter().filter(|t| t.passed()).count(),
        leaks,
        operations: transcripts.iter().map(Transcript::operation_count).sum(),
        events: transcripts.iter().map(Transcript::event_count).sum(),
        elapsed_ms,
        transcripts,
    }
}
