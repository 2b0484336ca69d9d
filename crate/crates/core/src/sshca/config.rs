//! SSH client configuration: one `Host` alias per project, jumping through
//! the bastion, inside a managed block that can be rewritten in place.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::cert::SshCertificate;
use crate::clock::Timestamp;

pub const BEGIN_MARKER: &str = "# BEGIN gatekeep";
pub const END_MARKER: &str = "# END gatekeep";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectAccount {
    pub code: String,
    pub username: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SshConfigParams {
    pub cluster_domain: String,
    pub jump_host: String,
    /// Private key path; the certificate is expected next to it.
    pub identity_file: Option<String>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("no projects to configure")]
    NoProjects,
    #[error("certificate is not valid now")]
    CertificateNotValid,
}

/// Renders the managed block. Only projects whose account is a principal of
/// `cert` are included, in alias order.
pub fn render_ssh_config(
    cert: &SshCertificate,
    projects: &[ProjectAccount],
    params: &SshConfigParams,
    now: Timestamp,
) -> Result<String, RenderError> {
    if now < cert.valid_after || now >= cert.valid_before {
        return Err(RenderError::CertificateNotValid);
    }
    let mut usable: Vec<&ProjectAccount> = projects
        .iter()
        .filter(|p| cert.principals.contains(&p.username))
        .collect();
    if usable.is_empty() {
        return Err(RenderError::NoProjects);
    }
    usable.sort_by(|a, b| a.code.cmp(&b.code));
    usable.dedup_by(|a, b| a.code == b.code);

    let mut out = String::new();
    out.push_str(BEGIN_MARKER);
    out.push('\n');
    out.push_str("# Managed by gatekeep. Edits inside this block are overwritten.\n");
    for p in usable {
        let alias = format!("{}.{}", p.code, params.cluster_domain);
        let _ = writeln!(out, "Host {alias}");
        let _ = writeln!(out, "    HostName {alias}");
        let _ = writeln!(out, "    User {}", p.username);
        let _ = writeln!(out, "    ProxyJump {}", params.jump_host);
        if let Some(key) = &params.identity_file {
            let _ = writeln!(out, "    IdentityFile {key}");
            let _ = writeln!(out, "    CertificateFile {key}-cert.pub");
        }
    }
    out.push_str(END_MARKER);
    out.push('\n');
    Ok(out)
}

/// Replaces the managed block in `existing`, or appends it. Text outside the
/// markers is kept byte for byte.
pub fn merge_managed_block(existing: &str, block: &str) -> String {
    let begin = existing.find(BEGIN_MARKER);
    let end = begin.and_then(|b| existing[b..].find(END_MARKER).map(|e| b + e + END_MARKER.len()));
    match (begin, end) {
        (Some(b), Some(e)) => {
            let rest = existing[e..].strip_prefix('\n').unwrap_or(&existing[e..]);
            format!("{}{block}{rest}", &existing[..b])
        }
        _ => {
            let mut out = existing.to_owned();
            if !out.is_empty() && !out.ends_with('\n') {
                out.push('\n');
            }
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(block);
            out
        }
    }
}

/// `Host` aliases in a rendered block.
pub fn aliases(block: &str) -> Vec<String> {
    block
        .lines()
        .filter_map(|l| l.strip_prefix("Host "))
        .map(|s| s.trim().to_owned())
        .collect()
}
