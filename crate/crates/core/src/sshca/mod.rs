//! The SSH certificate authority. Signs user keys into short-lived
//! certificates whose principals are the user's per-project accounts.

pub mod cert;
pub mod config;
pub mod wire;

use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use cert::{fingerprint, parse_public_key, public_key_line, verify_certificate, RejectReason, SshCertificate};
pub use config::{merge_managed_block, render_ssh_config, ProjectAccount, RenderError, SshConfigParams};

use crate::audit::{Auditor, ANONYMOUS};
use crate::clock::Clock;
use crate::crypto::KeyPair;
use crate::registry::ProjectRegistry;
use crate::token::{TokenError, TokenService};
use cert::CertificateTemplate;

pub const SSH_CA_AUDIENCE: &str = "ssh-ca";

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum CaError {
    #[error("token rejected: {0}")]
    TokenInvalid(TokenError),
    #[error("no active projects")]
    NoActiveProjects,
    #[error("public key is malformed or not ssh-ed25519")]
    MalformedKey,
}

impl CaError {
    pub fn code(&self) -> &'static str {
        match self {
            CaError::TokenInvalid(_) => "TokenInvalid",
            CaError::NoActiveProjects => "NoActiveProjects",
            CaError::MalformedKey => "MalformedKey",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedCertificate {
    pub certificate: String,
    pub serial: u64,
    pub principals: Vec<String>,
    pub projects: Vec<ProjectAccount>,
    pub valid_after: crate::Timestamp,
    pub valid_before: crate::Timestamp,
}

#[derive(Debug, Clone)]
pub struct CaConfig {
    pub cert_ttl: Duration,
    /// Backdating tolerates clocks on login nodes that run slightly behind.
    pub backdate: Duration,
}

impl Default for CaConfig {
    fn default() -> Self {
        CaConfig {
            cert_ttl: Duration::from_secs(8 * 3600),
            backdate: Duration::ZERO,
        }
    }
}

pub struct CertificateAuthority {
    key: KeyPair,
    clock: Arc<dyn Clock>,
    tokens: Arc<TokenService>,
    registry: Arc<ProjectRegistry>,
    auditor: Auditor,
    config: CaConfig,
    serial: Mutex<u64>,
}

impl std::fmt::Debug for CertificateAuthority {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CertificateAuthority").field("key", &self.key).finish_non_exhaustive()
    }
}

impl CertificateAuthority {
    pub fn new(
        config: CaConfig,
        key: KeyPair,
        clock: Arc<dyn Clock>,
        tokens: Arc<TokenService>,
        registry: Arc<ProjectRegistry>,
        auditor: Auditor,
    ) -> Self {
        CertificateAuthority {
            key,
            clock,
            tokens,
            registry,
            auditor,
            config,
            serial: Mutex::new(0),
        }
    }

    pub fn public_key(&self) -> ed25519_dalek::VerifyingKey {
        self.key.public()
    }

    /// The `ca.pub` line for `TrustedUserCAKeys`.
    pub fn public_key_line(&self) -> String {
        cert::public_key_line(&self.key.public_bytes(), "gatekeep-user-ca")
    }

    pub fn sign_user_key(&self, token: &str, public_key: &str) -> Result<IssuedCertificate, CaError> {
        let now = self.clock.now();
        let mut actor = ANONYMOUS.to_owned();
        let result = (|| {
            let claims = self.tokens.verify(token, SSH_CA_AUDIENCE).map_err(CaError::TokenInvalid)?;
            actor = claims.sub.clone();
            let key = cert::parse_public_key(public_key).map_err(|_| CaError::MalformedKey)?;
            let auth = self.registry.authorizations_for(&claims.sub);
            if auth.linux_accounts.is_empty() {
                return Err(CaError::NoActiveProjects);
            }
            let principals: Vec<String> = auth.linux_accounts.iter().map(|a| a.username.clone()).collect();
            let projects: Vec<ProjectAccount> = auth
                .linux_accounts
                .iter()
                .filter_map(|a| {
                    auth.project(&a.project_id).map(|p| ProjectAccount {
                        code: p.code.clone(),
                        username: a.username.clone(),
                    })
                })
                .collect();
            let mut nonce = vec![0u8; 32];
            rand::rngs::OsRng.fill_bytes(&mut nonce);
            let mut serial = self.serial.lock();
            *serial += 1;
            let cert = CertificateTemplate {
                nonce,
                public_key: key,
                serial: *serial,
                key_id: claims.sub.clone(),
                principals: principals.clone(),
                valid_after: now - self.config.backdate,
                valid_before: now + self.config.cert_ttl,
                extensions: vec!["permit-pty".into()],
            }
            .sign(&self.key);
            Ok(IssuedCertificate {
                certificate: cert.to_openssh(),
                serial: cert.serial,
                principals,
                projects,
                valid_after: cert.valid_after,
                valid_before: cert.valid_before,
            })
        })();
        match &result {
            Ok(c) => self.auditor.allow(
                &actor,
                "cert.sign",
                [("serial", c.serial.to_string()), ("principals", c.principals.join(","))],
            ),
            Err(e) => self.auditor.deny(&actor, "cert.sign", e.code(), Vec::<(String, String)>::new()),
        }
        result
    }
}
