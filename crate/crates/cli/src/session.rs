//! The cached broker session, the only credential the CLI keeps.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::os::unix::fs::{OpenOptionsExt, PermissionsExt};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedSession {
    pub broker: String,
    pub session_id: String,
    pub persistent_id: String,
    pub expires_at: i64,
}

pub fn now() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs() as i64)
}

impl CachedSession {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = OpenOptions::new().write(true).create(true).truncate(true).mode(0o600).open(&tmp)?;
        // An existing file keeps its old mode through open(); force it.
        f.set_permissions(fs::Permissions::from_mode(0o600))?;
        f.write_all(serde_json::to_string_pretty(self).expect("serializable").as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// The cached session if there is one for `broker` that has not
    /// expired yet.
    pub fn load(path: &Path, broker: &str) -> Result<Self, CliError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(CliError::SessionExpired),
            Err(e) => return Err(e.into()),
        };
        let s: CachedSession = serde_json::from_str(&text).map_err(|_| CliError::SessionExpired)?;
        if s.broker != broker || s.expires_at <= now() {
            return Err(CliError::SessionExpired);
        }
        Ok(s)
    }

    pub fn clear(path: &Path) -> Result<bool, CliError> {
        match fs::remove_file(path) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(e.into()),
        }
    }
}
