//! The zone graph: every resource tagged with its domain and zone, every
//! edge labelled with the credential needed to cross it.

use std::collections::BTreeSet;

use gatekeep_core::audit::SourceDomain;
use serde::{Deserialize, Serialize};

pub const INTERNET: &str = "internet";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Access,
    Management,
    Hpc,
    Data,
    Security,
    Internet,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum CredentialClass {
    /// Public ingress.
    None,
    UserToken { audience: String },
    SshCertificate,
    AdminToken { audience: String },
    ServiceToken { audience: String },
}

impl std::fmt::Display for CredentialClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CredentialClass::None => f.write_str("none"),
            CredentialClass::UserToken { audience } => write!(f, "user-token({audience})"),
            CredentialClass::SshCertificate => f.write_str("ssh-certificate"),
            CredentialClass::AdminToken { audience } => write!(f, "admin-token({audience})"),
            CredentialClass::ServiceToken { audience } => write!(f, "service-token({audience})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    /// Owning domain. Only the internet has none.
    pub domain: Option<SourceDomain>,
    pub zone: Zone,
    /// Relays such as the bastion are crossed, not used.
    #[serde(default)]
    pub transit: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub credential: CredentialClass,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl ZoneGraph {
    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Nodes a principal might want to reach: everything except the
    /// internet and transit relays.
    pub fn targets(&self) -> Vec<&Node> {
        self.nodes.iter().filter(|n| n.zone != Zone::Internet && !n.transit).collect()
    }

    pub fn edges_from<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.from == id)
    }

    /// Structural problems: dangling edges, duplicate ids, untagged nodes.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                problems.push(format!("duplicate node {}", n.id));
            }
            if n.domain.is_none() && n.zone != Zone::Internet {
                problems.push(format!("node {} has no domain", n.id));
            }
        }
        for e in &self.edges {
            for end in [&e.from, &e.to] {
                if !ids.contains(end.as_str()) {
                    problems.push(format!("edge {} -> {} names unknown node {end}", e.from, e.to));
                }
            }
        }
        problems
    }
}

fn node(id: &str, domain: SourceDomain, zone: Zone) -> Node {
    Node {
        id: id.into(),
        domain: Some(domain),
        zone,
        transit: false,
    }
}

fn relay(id: &str, domain: SourceDomain) -> Node {
    Node {
        transit: true,
        ..node(id, domain, Zone::Access)
    }
}

fn edge(from: &str, to: &str, credential: CredentialClass) -> Edge {
    Edge {
        from: from.into(),
        to: to.into(),
        credential,
    }
}

fn user(aud: &str) -> CredentialClass {
    CredentialClass::UserToken { audience: aud.into() }
}

fn admin(aud: &str) -> CredentialClass {
    CredentialClass::AdminToken { audience: aud.into() }
}

pub const SIEM_INGEST_AUDIENCE: &str = "siem:ingest";
pub const LOGIN_NODES: [&str; 2] = ["mdc.login-ai1", "mdc.login-i3"];
pub const MGMT_NODES: [&str; 2] = ["mdc.mgmt-ai1", "mdc.mgmt-i3"];

pub fn build_default_topology() -> ZoneGraph {
    use SourceDomain::*;
    let nodes = vec![
        Node {
            id: INTERNET.into(),
            domain: None,
            zone: Zone::Internet,
            transit: true,
        },
        node("fds.login", Fds, Zone::Access),
        node("fds.ssh-ca", Fds, Zone::Access),
        relay("sws.bastion", Sws),
        relay("sws.tailnet", Sws),
        node("mdc.login-ai1", Mdc, Zone::Hpc),
        node("mdc.login-i3", Mdc, Zone::Hpc),
        node("mdc.jupyter", Mdc, Zone::Hpc),
        node("mdc.mgmt-ai1", Mdc, Zone::Management),
        node("mdc.mgmt-i3", Mdc, Zone::Management),
        node("mdc.storage", Mdc, Zone::Data),
        node("sec.siem", Sec, Zone::Security),
    ];
    let mut edges = vec![
        edge(INTERNET, "fds.login", CredentialClass::None),
        edge(INTERNET, "sws.bastion", CredentialClass::None),
        edge(INTERNET, "sws.tailnet", admin("mgmt:tailnet")),
        edge("fds.login", "fds.ssh-ca", user("ssh-ca")),
        edge("fds.login", "mdc.jupyter", user("tunnel:jupyter")),
    ];
    for n in LOGIN_NODES {
        edges.push(edge("sws.bastion", n, CredentialClass::SshCertificate));
    }
    for n in MGMT_NODES {
        edges.push(edge("sws.tailnet", n, admin("mgmt:tailnet")));
        edges.push(edge(n, "mdc.storage", admin("mgmt:tailnet")));
    }
    for from in ["fds.login", "fds.ssh-ca", "sws.bastion", "sws.tailnet", "mdc.login-ai1", "mdc.login-i3", "mdc.jupyter", "mdc.mgmt-ai1", "mdc.mgmt-i3", "mdc.storage"] {
        edges.push(edge(
            from,
            "sec.siem",
            CredentialClass::ServiceToken {
                audience: SIEM_INGEST_AUDIENCE.into(),
            },
        ));
    }
    edges.sort();
    ZoneGraph { nodes, edges }
}
