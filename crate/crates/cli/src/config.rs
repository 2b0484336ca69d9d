//! Client configuration.
//!
//! The file is plain `key = value` lines; `#` starts a comment. Keys:
//!
//! ```text
//! broker             = https://broker.example     # required unless --broker is given
//! token_cache        = ~/.cache/gatekeep/session.json
//! ssh_config         = ~/.ssh/config
//! cluster_domain     = aip1.example               # overrides what the broker reports
//! timeout_secs       = 10                         # per HTTP request
//! login_timeout_secs = 300                        # how long `login` waits for approval
//! retries            = 3                          # attempts per request on network failure
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use reqwest::Url;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub broker: Option<Url>,
    pub token_cache: PathBuf,
    pub ssh_config: PathBuf,
    pub cluster_domain: Option<String>,
    pub timeout: Duration,
    pub login_timeout: Option<Duration>,
    pub retries: u32,
}

impl Default for ClientConfig {
    fn default() -> Self {
        let home = dirs::home_dir().unwrap_or_else(|| PathBuf::from("."));
        ClientConfig {
            broker: None,
            token_cache: dirs::cache_dir()
                .unwrap_or_else(|| home.join(".cache"))
                .join("gatekeep")
                .join("session.json"),
            ssh_config: home.join(".ssh").join("config"),
            cluster_domain: None,
            timeout: Duration::from_secs(10),
            login_timeout: None,
            retries: 3,
        }
    }
}

pub fn default_path() -> Option<PathBuf> {
    dirs::config_dir().map(|d| d.join("gatekeep").join("config"))
}

pub fn expand(raw: &str) -> Result<PathBuf, CliError> {
    shellexpand::full(raw)
        .map(|s| PathBuf::from(s.into_owned()))
        .map_err(|e| CliError::Config(format!("cannot expand {raw}: {e}")))
}

pub fn parse_url(raw: &str) -> Result<Url, CliError> {
    let bad = || CliError::Config(format!("broker URL {raw} must be an absolute http(s) URL"));
    let url = Url::parse(raw).map_err(|_| bad())?;
    if !matches!(url.scheme(), "http" | "https") || url.host().is_none() {
        return Err(bad());
    }
    Ok(url)
}

fn secs(key: &str, value: &str) -> Result<u64, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: expected whole seconds, got {value}")))
}

impl ClientConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = ClientConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            match key {
                "broker" => cfg.broker = Some(parse_url(value)?),
                "token_cache" => cfg.token_cache = expand(value)?,
                "ssh_config" => cfg.ssh_config = expand(value)?,
                "cluster_domain" => cfg.cluster_domain = Some(value.to_owned()),
                "timeout_secs" => cfg.timeout = Duration::from_secs(secs(key, value)?),
                "login_timeout_secs" => cfg.login_timeout = Some(Duration::from_secs(secs(key, value)?)),
                "retries" => {
                    cfg.retries = value
                        .parse::<u32>()
                        .ok()
                        .filter(|&r| r > 0)
                        .ok_or_else(|| CliError::Config(format!("retries: expected a positive count, got {value}")))?
                }
                other => return Err(CliError::Config(format!("line {}: unknown key {other}", n + 1))),
            }
        }
        Ok(cfg)
    }

    /// Reads `path`. A missing file at the default location is not an
    /// error; a missing file the user named is.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let (path, explicit) = match path {
            Some(p) => (p.to_owned(), true),
            None => match default_path() {
                Some(p) => (p, false),
                None => return Ok(ClientConfig::default()),
            },
        };
        match std::fs::read_to_string(&path) {
            Ok(text) => ClientConfig::parse(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && !explicit => Ok(ClientConfig::default()),
            Err(e) => Err(CliError::Config(format!("{}: {e}", path.display()))),
        }
    }

    pub fn broker(&self) -> Result<&Url, CliError> {
        self.broker
            .as_ref()
            .ok_or_else(|| CliError::Config("no broker configured; pass --broker or set GATEKEEP_BROKER".into()))
    }
}
