//! Invitation emails are written to a JSON-lines outbox instead of being sent.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;

use super::model::Role;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutboxMessage {
    pub to: String,
    pub subject: String,
    pub invitation_token: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project_code: Option<String>,
    pub expires_at: Timestamp,
}

#[derive(Debug, Default)]
pub struct Outbox {
    path: Option<PathBuf>,
    messages: Mutex<Vec<OutboxMessage>>,
}

impl Outbox {
    pub fn new(path: Option<PathBuf>) -> Self {
        Outbox {
            path,
            messages: Mutex::new(Vec::new()),
        }
    }

    pub fn push(&self, message: OutboxMessage) {
        let mut messages = self.messages.lock();
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&message).expect("outbox message serializes");
            let written = path
                .parent()
                .map_or(Ok(()), fs::create_dir_all)
                .and_then(|_| OpenOptions::new().create(true).append(true).open(path))
                .and_then(|mut f| writeln!(f, "{line}"));
            if let Err(e) = written {
                tracing::error!(error = %e, path = %path.display(), "failed to append to outbox");
            }
        }
        messages.push(message);
    }

    pub fn messages(&self) -> Vec<OutboxMessage> {
        self.messages.lock().clone()
    }
}
