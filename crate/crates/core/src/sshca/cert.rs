//! OpenSSH `ssh-ed25519-cert-v01@openssh.com` user certificates.

use std::fmt;

use ed25519_dalek::VerifyingKey;
use serde::{Deserialize, Serialize};

use super::wire::{Reader, Writer};
use crate::clock::Timestamp;
use crate::crypto::{self, KeyPair};

pub const CERT_TYPE: &str = "ssh-ed25519-cert-v01@openssh.com";
pub const KEY_TYPE: &str = "ssh-ed25519";
const USER_CERT: u32 = 1;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("not an ssh-ed25519 public key")]
    NotEd25519,
    #[error("not an ssh-ed25519 user certificate")]
    NotCertificate,
    #[error("malformed key or certificate encoding")]
    Malformed,
}

/// Parses an `ssh-ed25519 AAAA... [comment]` line into the raw key.
pub fn parse_public_key(line: &str) -> Result<[u8; 32], FormatError> {
    let mut fields = line.split_whitespace();
    if fields.next() != Some(KEY_TYPE) {
        return Err(FormatError::NotEd25519);
    }
    let blob = fields.next().and_then(crypto::b64_decode).ok_or(FormatError::Malformed)?;
    parse_public_key_blob(&blob)
}

fn parse_public_key_blob(blob: &[u8]) -> Result<[u8; 32], FormatError> {
    let mut r = Reader::new(blob);
    if r.string().map_err(|_| FormatError::Malformed)? != KEY_TYPE.as_bytes() {
        return Err(FormatError::NotEd25519);
    }
    let key: [u8; 32] = r
        .string()
        .ok()
        .and_then(|k| k.try_into().ok())
        .ok_or(FormatError::Malformed)?;
    if !r.is_empty() || crypto::public_key_from_bytes(&key).is_err() {
        return Err(FormatError::Malformed);
    }
    Ok(key)
}

pub fn public_key_blob(key: &[u8; 32]) -> Vec<u8> {
    let mut w = Writer::new();
    w.string(KEY_TYPE.as_bytes()).string(key);
    w.into_bytes()
}

pub fn public_key_line(key: &[u8; 32], comment: &str) -> String {
    format!("{KEY_TYPE} {} {comment}", crypto::b64(&public_key_blob(key)))
        .trim_end()
        .to_owned()
}

/// SHA256 fingerprint in the form `ssh-keygen -l` prints.
pub fn fingerprint(key: &[u8; 32]) -> String {
    use base64::engine::general_purpose::STANDARD_NO_PAD;
    use base64::Engine;
    use sha2::{Digest, Sha256};
    format!("SHA256:{}", STANDARD_NO_PAD.encode(Sha256::digest(public_key_blob(key))))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SshCertificate {
    pub nonce: Vec<u8>,
    pub public_key: [u8; 32],
    pub serial: u64,
    /// The subject's persistent id.
    pub key_id: String,
    pub principals: Vec<String>,
    pub valid_after: Timestamp,
    pub valid_before: Timestamp,
    /// Extension names, each with empty data.
    pub extensions: Vec<String>,
    pub signature_key: [u8; 32],
    pub signature: Vec<u8>,
}

/// What gets signed. Everything except the signature.
#[derive(Clone, Debug)]
pub struct CertificateTemplate {
    pub nonce: Vec<u8>,
    pub public_key: [u8; 32],
    pub serial: u64,
    pub key_id: String,
    pub principals: Vec<String>,
    pub valid_after: Timestamp,
    pub valid_before: Timestamp,
    pub extensions: Vec<String>,
}

fn to_u64(t: Timestamp) -> u64 {
    t.as_secs().max(0) as u64
}

fn from_u64(v: u64) -> Timestamp {
    Timestamp(v.min(i64::MAX as u64) as i64)
}

impl CertificateTemplate {
    pub fn sign(self, ca: &KeyPair) -> SshCertificate {
        let mut cert = SshCertificate {
            nonce: self.nonce,
            public_key: self.public_key,
            serial: self.serial,
            key_id: self.key_id,
            principals: self.principals,
            valid_after: self.valid_after,
            valid_before: self.valid_before,
            extensions: {
                let mut e = self.extensions;
                // The wire format wants extensions sorted by name.
                e.sort();
                e.dedup();
                e
            },
            signature_key: ca.public_bytes(),
            signature: Vec::new(),
        };
        let body = cert.signed_body();
        let mut sig = Writer::new();
        sig.string(KEY_TYPE.as_bytes()).string(&ca.sign(&body));
        cert.signature = sig.into_bytes();
        cert
    }
}

impl SshCertificate {
    /// The bytes covered by the CA signature.
    pub fn signed_body(&self) -> Vec<u8> {
        let mut principals = Writer::new();
        for p in &self.principals {
            principals.string(p.as_bytes());
        }
        let mut extensions = Writer::new();
        for e in &self.extensions {
            extensions.string(e.as_bytes()).string(b"");
        }
        let mut w = Writer::new();
        w.string(CERT_TYPE.as_bytes())
            .string(&self.nonce)
            .string(&self.public_key)
            .u64(self.serial)
            .u32(USER_CERT)
            .string(self.key_id.as_bytes())
            .string(principals.as_bytes())
            .u64(to_u64(self.valid_after))
            .u64(to_u64(self.valid_before))
            .string(b"")
            .string(extensions.as_bytes())
            .string(b"")
            .string(&public_key_blob(&self.signature_key));
        w.into_bytes()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.signed_body();
        let mut w = Writer::new();
        w.string(&self.signature);
        out.extend_from_slice(w.as_bytes());
        out
    }

    /// One line, as written to `id_ed25519-cert.pub`.
    pub fn to_openssh(&self) -> String {
        format!("{CERT_TYPE} {} {}", crypto::b64(&self.to_bytes()), self.key_id)
    }

    pub fn from_openssh(line: &str) -> Result<Self, FormatError> {
        let mut fields = line.split_whitespace();
        if fields.next() != Some(CERT_TYPE) {
            return Err(FormatError::NotCertificate);
        }
        let blob = fields.next().and_then(crypto::b64_decode).ok_or(FormatError::Malformed)?;
        Self::from_bytes(&blob)
    }

    pub fn from_bytes(blob: &[u8]) -> Result<Self, FormatError> {
        let m = |_| FormatError::Malformed;
        let mut r = Reader::new(blob);
        if r.string().map_err(m)? != CERT_TYPE.as_bytes() {
            return Err(FormatError::NotCertificate);
        }
        let nonce = r.string().map_err(m)?.to_vec();
        let public_key: [u8; 32] = r.string().map_err(m)?.try_into().map_err(|_| FormatError::Malformed)?;
        let serial = r.u64().map_err(m)?;
        if r.u32().map_err(m)? != USER_CERT {
            return Err(FormatError::NotCertificate);
        }
        let key_id = utf8(r.string().map_err(m)?)?;
        let mut principals = Vec::new();
        let mut pr = Reader::new(r.string().map_err(m)?);
        while !pr.is_empty() {
            principals.push(utf8(pr.string().map_err(m)?)?);
        }
        let valid_after = from_u64(r.u64().map_err(m)?);
        let valid_before = from_u64(r.u64().map_err(m)?);
        if !r.string().map_err(m)?.is_empty() {
            // Critical options we do not understand must not be ignored.
            return Err(FormatError::Malformed);
        }
        let mut extensions = Vec::new();
        let mut er = Reader::new(r.string().map_err(m)?);
        while !er.is_empty() {
            extensions.push(utf8(er.string().map_err(m)?)?);
            er.string().map_err(m)?;
        }
        r.string().map_err(m)?;
        let signature_key = parse_public_key_blob(r.string().map_err(m)?)?;
        let signature = r.string().map_err(m)?.to_vec();
        if !r.is_empty() {
            return Err(FormatError::Malformed);
        }
        Ok(SshCertificate {
            nonce,
            public_key,
            serial,
            key_id,
            principals,
            valid_after,
            valid_before,
            extensions,
            signature_key,
            signature,
        })
    }

    fn raw_signature(&self) -> Option<Vec<u8>> {
        let mut r = Reader::new(&self.signature);
        if r.string().ok()? != KEY_TYPE.as_bytes() {
            return None;
        }
        let sig = r.string().ok()?.to_vec();
        r.is_empty().then_some(sig)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    BadSignature,
    NotYetValid,
    Expired,
    PrincipalNotListed,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::BadSignature => "BadSignature",
            RejectReason::NotYetValid => "NotYetValid",
            RejectReason::Expired => "Expired",
            RejectReason::PrincipalNotListed => "PrincipalNotListed",
        })
    }
}

/// Accepts iff the certificate was signed by `ca`, `valid_after <= now <
/// valid_before`, and `principal` is listed. Depends on nothing but its
/// arguments.
pub fn verify_certificate(
    cert: &SshCertificate,
    principal: &str,
    now: Timestamp,
    ca: &VerifyingKey,
) -> Result<(), RejectReason> {
    if cert.signature_key != ca.to_bytes() {
        return Err(RejectReason::BadSignature);
    }
    let sig = cert.raw_signature().ok_or(RejectReason::BadSignature)?;
    if !crypto::verify(ca, &cert.signed_body(), &sig) {
        return Err(RejectReason::BadSignature);
    }
    if now < cert.valid_after {
        return Err(RejectReason::NotYetValid);
    }
    if now >= cert.valid_before {
        return Err(RejectReason::Expired);
    }
    if !cert.principals.iter().any(|p| p == principal) {
        return Err(RejectReason::PrincipalNotListed);
    }
    Ok(())
}

fn utf8(bytes: &[u8]) -> Result<String, FormatError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| FormatError::Malformed)
}
