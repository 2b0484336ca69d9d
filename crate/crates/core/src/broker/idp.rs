//! Identity providers and the signed assertions they hand to the broker.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ed25519_dalek::VerifyingKey;
use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::crypto::{self, KeyPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdpKind {
    Federated,
    LastResort,
    Admin,
}

impl IdpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IdpKind::Federated => "federated",
            IdpKind::LastResort => "last_resort",
            IdpKind::Admin => "admin",
        }
    }
}

impl std::str::FromStr for IdpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "federated" => Ok(IdpKind::Federated),
            "last_resort" => Ok(IdpKind::LastResort),
            "admin" => Ok(IdpKind::Admin),
            other => Err(format!("unknown idp kind `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assurance {
    Low,
    Medium,
    High,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityProvider {
    pub idp_id: String,
    pub kind: IdpKind,
    pub assurance: Assurance,
    pub mfa_required: bool,
    pub display_name: String,
    /// Base64 Ed25519 key the provider signs assertions with.
    pub public_key: String,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum IdpConfigError {
    #[error("admin identity provider `{0}` must require MFA and assert high assurance")]
    WeakAdminProvider(String),
    #[error("duplicate identity provider id `{0}`")]
    DuplicateId(String),
    #[error("identity provider `{0}` has an invalid public key")]
    BadKey(String),
    #[error("cannot read identity provider config: {0}")]
    Io(String),
    #[error("malformed identity provider config: {0}")]
    Parse(String),
}

impl IdentityProvider {
    pub fn validate(&self) -> Result<VerifyingKey, IdpConfigError> {
        if self.kind == IdpKind::Admin && !(self.mfa_required && self.assurance == Assurance::High) {
            return Err(IdpConfigError::WeakAdminProvider(self.idp_id.clone()));
        }
        crypto::public_key_from_b64(&self.public_key)
            .map_err(|_| IdpConfigError::BadKey(self.idp_id.clone()))
    }
}

/// What an upstream IdP tells the broker after a successful login.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdPAssertion {
    pub idp_id: String,
    pub subject: String,
    pub email: String,
    pub mfa_satisfied: bool,
    pub issued_at: Timestamp,
    /// Detached base64 Ed25519 signature over [`IdPAssertion::signing_bytes`].
    #[serde(default)]
    pub signature: String,
}

#[derive(Serialize)]
struct AssertionBody<'a> {
    idp_id: &'a str,
    subject: &'a str,
    email: &'a str,
    mfa_satisfied: bool,
    issued_at: Timestamp,
}

impl IdPAssertion {
    pub fn signing_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&AssertionBody {
            idp_id: &self.idp_id,
            subject: &self.subject,
            email: &self.email,
            mfa_satisfied: self.mfa_satisfied,
            issued_at: self.issued_at,
        })
        .expect("assertion body serializes")
    }

    pub fn verify_signature(&self, key: &VerifyingKey) -> bool {
        match crypto::b64_decode(&self.signature) {
            Some(sig) => crypto::verify(key, &self.signing_bytes(), &sig),
            None => false,
        }
    }

    pub fn pair(&self) -> IdpLink {
        IdpLink {
            idp_id: self.idp_id.clone(),
            subject: self.subject.clone(),
        }
    }
}

/// An `(idp_id, subject)` pair.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IdpLink {
    pub idp_id: String,
    pub subject: String,
}

/// An in-repo stand-in for an upstream identity provider: it owns a signing
/// key and mints assertions on demand.
#[derive(Clone, Debug)]
pub struct SimulatedIdp {
    provider: IdentityProvider,
    key: KeyPair,
}

impl SimulatedIdp {
    pub fn new(
        idp_id: &str,
        kind: IdpKind,
        assurance: Assurance,
        mfa_required: bool,
        display_name: &str,
        key: KeyPair,
    ) -> Self {
        let provider = IdentityProvider {
            idp_id: idp_id.to_owned(),
            kind,
            assurance,
            mfa_required,
            display_name: display_name.to_owned(),
            public_key: crypto::b64(&key.public_bytes()),
        };
        SimulatedIdp { provider, key }
    }

    /// The three providers every deployment starts with. Keys are derived
    /// from fixed labels so fixtures are reproducible.
    pub fn default_fixture() -> Vec<SimulatedIdp> {
        vec![
            SimulatedIdp::new(
                "myaccessid",
                IdpKind::Federated,
                Assurance::Medium,
                false,
                "University Login (MyAccessID)",
                KeyPair::from_label("gatekeep-fixture:idp:myaccessid"),
            ),
            SimulatedIdp::new(
                "last-resort",
                IdpKind::LastResort,
                Assurance::Medium,
                true,
                "Identity Provider of Last Resort",
                KeyPair::from_label("gatekeep-fixture:idp:last-resort"),
            ),
            SimulatedIdp::new(
                "admin-cloud",
                IdpKind::Admin,
                Assurance::High,
                true,
                "Administrator Login",
                KeyPair::from_label("gatekeep-fixture:idp:admin-cloud"),
            ),
        ]
    }

    pub fn provider(&self) -> &IdentityProvider {
        &self.provider
    }

    pub fn idp_id(&self) -> &str {
        &self.provider.idp_id
    }

    pub fn key(&self) -> &KeyPair {
        &self.key
    }

    pub fn assert(&self, subject: &str, email: &str, mfa_satisfied: bool, issued_at: Timestamp) -> IdPAssertion {
        let mut assertion = IdPAssertion {
            idp_id: self.provider.idp_id.clone(),
            subject: subject.to_owned(),
            email: email.to_owned(),
            mfa_satisfied,
            issued_at,
            signature: String::new(),
        };
        assertion.signature = crypto::b64(&self.key.sign(&assertion.signing_bytes()));
        assertion
    }
}

/// The set of providers the broker trusts, keyed by `idp_id`.
#[derive(Clone, Debug, Default)]
pub struct IdpRegistry {
    providers: BTreeMap<String, (IdentityProvider, VerifyingKey)>,
}

impl IdpRegistry {
    pub fn new(providers: impl IntoIterator<Item = IdentityProvider>) -> Result<Self, IdpConfigError> {
        let mut registry = IdpRegistry::default();
        for provider in providers {
            registry.insert(provider)?;
        }
        Ok(registry)
    }

    pub fn insert(&mut self, provider: IdentityProvider) -> Result<(), IdpConfigError> {
        let key = provider.validate()?;
        if self.providers.contains_key(&provider.idp_id) {
            return Err(IdpConfigError::DuplicateId(provider.idp_id));
        }
        self.providers.insert(provider.idp_id.clone(), (provider, key));
        Ok(())
    }

    pub fn get(&self, idp_id: &str) -> Option<(&IdentityProvider, &VerifyingKey)> {
        self.providers.get(idp_id).map(|(p, k)| (p, k))
    }

    pub fn iter(&self) -> impl Iterator<Item = &IdentityProvider> {
        self.providers.values().map(|(p, _)| p)
    }

    pub fn len(&self) -> usize {
        self.providers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.providers.is_empty()
    }

    /// Loads a JSON array of [`IdentityProvider`] records.
    pub fn load(path: &Path) -> Result<Self, IdpConfigError> {
        let text = fs::read_to_string(path).map_err(|e| IdpConfigError::Io(e.to_string()))?;
        let providers: Vec<IdentityProvider> =
            serde_json::from_str(&text).map_err(|e| IdpConfigError::Parse(e.to_string()))?;
        IdpRegistry::new(providers)
    }
}

/// Reads every `*.json` file in `dir` as one signed assertion, sorted by file
/// name.
pub fn load_assertion_fixtures(dir: &Path) -> std::io::Result<Vec<IdPAssertion>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p)?;
            serde_json::from_str(&text).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", p.display()))
            })
        })
        .collect()
}

pub fn write_assertion_fixture(dir: &Path, name: &str, assertion: &IdPAssertion) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(assertion).expect("assertion serializes");
    fs::write(dir.join(format!("{name}.json")), text)
}
