//! Reachability over the zone graph. An edge is crossable only if the
//! principal holds a credential that the live services accept right now.

use std::collections::{BTreeMap, HashMap};

use gatekeep_core::sshca::cert::{verify_certificate, SshCertificate};
use gatekeep_core::token::AudienceClass;
use gatekeep_core::Platform;
use petgraph::algo::astar;
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::EdgeFiltered;
use serde::{Deserialize, Serialize};

use crate::topology::{CredentialClass, ZoneGraph, INTERNET};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReachError {
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
}

/// What a principal holds. Certificates carry the principal name the
/// holder would log in as.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialSet {
    pub tokens: Vec<String>,
    pub certificates: Vec<(String, String)>,
}

impl CredentialSet {
    pub fn union(&self, other: &CredentialSet) -> CredentialSet {
        let mut out = self.clone();
        out.tokens.extend(other.tokens.iter().cloned());
        out.certificates.extend(other.certificates.iter().cloned());
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reachability {
    pub reachable: bool,
    /// Node ids from the internet to the target, when reachable.
    pub witness: Vec<String>,
}

fn satisfied(p: &Platform, creds: &CredentialSet, class: &CredentialClass) -> bool {
    let token_ok = |aud: &str| creds.tokens.iter().any(|t| p.tokens.verify(t, aud).is_ok());
    match class {
        CredentialClass::None => true,
        CredentialClass::UserToken { audience } => token_ok(audience),
        CredentialClass::AdminToken { audience } => {
            AudienceClass::of(audience).is_some_and(|c| c.is_admin()) && token_ok(audience)
        }
        CredentialClass::ServiceToken { audience } => token_ok(audience),
        CredentialClass::SshCertificate => {
            let now = p.clock.now();
            let ca = p.ca.public_key();
            creds.certificates.iter().any(|(line, principal)| {
                SshCertificate::from_openssh(line).is_ok_and(|c| verify_certificate(&c, principal, now, &ca).is_ok())
            })
        }
    }
}

struct Evaluated {
    graph: DiGraph<String, bool>,
    index: HashMap<String, NodeIndex>,
}

fn evaluate(g: &ZoneGraph, p: &Platform, creds: &CredentialSet) -> Evaluated {
    let mut graph = DiGraph::new();
    let mut index = HashMap::new();
    for n in &g.nodes {
        index.insert(n.id.clone(), graph.add_node(n.id.clone()));
    }
    let mut memo: HashMap<&CredentialClass, bool> = HashMap::new();
    for e in &g.edges {
        let ok = *memo.entry(&e.credential).or_insert_with(|| satisfied(p, creds, &e.credential));
        graph.add_edge(index[&e.from], index[&e.to], ok);
    }
    Evaluated { graph, index }
}

impl Evaluated {
    fn path(&self, target: &str) -> Option<Vec<String>> {
        let start = self.index[INTERNET];
        let goal = *self.index.get(target)?;
        let open = EdgeFiltered::from_fn(&self.graph, |e| *e.weight());
        let (_, path) = astar(&open, start, |n| n == goal, |_| 1u32, |_| 0)?;
        Some(path.into_iter().map(|i| self.graph[i].clone()).collect())
    }
}

/// Can `creds` get from the internet to `target`, with credentials checked
/// against the running services?
pub fn check_reachability(
    g: &ZoneGraph,
    p: &Platform,
    creds: &CredentialSet,
    target: &str,
) -> Result<Reachability, ReachError> {
    if g.node(target).is_none() {
        return Err(ReachError::UnknownTarget(target.to_owned()));
    }
    let witness = evaluate(g, p, creds).path(target);
    Ok(Reachability {
        reachable: witness.is_some(),
        witness: witness.unwrap_or_default(),
    })
}

/// principal -> target -> reachable, over every non-transit node.
pub type AccessMatrix = BTreeMap<String, BTreeMap<String, bool>>;

pub fn enumerate_access_matrix(g: &ZoneGraph, p: &Platform, principals: &[(String, CredentialSet)]) -> AccessMatrix {
    principals
        .iter()
        .map(|(name, creds)| {
            let ev = evaluate(g, p, creds);
            let row = g.targets().into_iter().map(|t| (t.id.clone(), ev.path(&t.id).is_some())).collect();
            (name.clone(), row)
        })
        .collect()
}
