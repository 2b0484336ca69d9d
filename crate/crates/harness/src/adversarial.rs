//! Randomized attack scripts. Each operation is tried against the live
//! gateways and compared with what the reachability oracle says the same
//! credential should reach.

use std::time::Duration;

use gatekeep_core::gateway::BackendRequest;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::env::{Env, JUPYTER_PATH};
use crate::principals::build_principals;
use crate::reach::{check_reachability, CredentialSet};
use crate::stories::forge;
use crate::topology::{build_default_topology, LOGIN_NODES, MGMT_NODES};

#[derive(Clone, Debug)]
enum Item {
    Token { token: String, admin_rooted: bool },
    Cert { line: String, principal: String },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AdversarialReport {
    pub scripts: usize,
    pub operations: usize,
    pub allowed: usize,
    /// Live outcome differed from the oracle.
    pub mismatches: Vec<String>,
    /// Management connections made without a token from the admin IdP.
    pub unrooted_mgmt_access: usize,
}

impl AdversarialReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty() && self.unrooted_mgmt_access == 0
    }
}

fn pool(env: &Env) -> Vec<Item> {
    let mut items = Vec::new();
    for (name, creds) in build_principals(env) {
        let admin_rooted = name.starts_with("admin");
        items.extend(creds.tokens.into_iter().map(|token| Item::Token { token, admin_rooted }));
        items.extend(
            creds
                .certificates
                .into_iter()
                .map(|(line, principal)| Item::Cert { line, principal }),
        );
    }
    items
}

fn one_token(t: &str) -> CredentialSet {
    CredentialSet {
        tokens: vec![t.to_owned()],
        certificates: Vec::new(),
    }
}

/// Runs one script of `ops` operations seeded by `seed`.
pub fn run_script(seed: u64, ops: usize, report: &mut AdversarialReport) {
    let mut rng = StdRng::seed_from_u64(seed);
    let env = Env::new();
    env.register_jupyter();
    let graph = build_default_topology();
    let mut items = pool(&env);
    let principals: Vec<String> = items
        .iter()
        .filter_map(|i| match i {
            Item::Cert { principal, .. } => Some(principal.clone()),
            _ => None,
        })
        .collect();
    let reach = |creds: &CredentialSet, node: &str| check_reachability(&graph, &env.p, creds, node).expect("known node").reachable;

    for n in 0..ops {
        report.operations += 1;
        let item = items.choose(&mut rng).expect("non-empty pool").clone();
        let what = rng.gen_range(0..6);
        let (desc, live, oracle) = match (what, &item) {
            (0, Item::Token { token, admin_rooted }) | (1, Item::Token { token, admin_rooted }) => {
                let node = *[MGMT_NODES[0], MGMT_NODES[1], LOGIN_NODES[0]].choose(&mut rng).expect("nodes");
                let live = env.p.mgmt.connect(Some(token), node).is_ok();
                if live && MGMT_NODES.contains(&node) && !admin_rooted {
                    report.unrooted_mgmt_access += 1;
                }
                (format!("mgmt connect {node}"), live, reach(&one_token(token), node))
            }
            (2, Item::Token { token, .. }) => {
                let req = BackendRequest {
                    method: "GET".into(),
                    path: JUPYTER_PATH.into(),
                    headers: Default::default(),
                    body: String::new(),
                };
                let live = env
                    .p
                    .gateway
                    .route_web_request(&format!("adv-{seed}-{n}"), req, Some(token))
                    .is_ok_and(|r| r.status == 200);
                ("web /jupyter".to_owned(), live, reach(&one_token(token), "mdc.jupyter"))
            }
            (3, Item::Token { token, .. }) => {
                items.push(Item::Token {
                    token: forge(token),
                    admin_rooted: false,
                });
                continue;
            }
            (_, Item::Cert { line, principal }) => {
                let as_whom = if rng.gen_bool(0.7) {
                    principal.clone()
                } else {
                    principals.choose(&mut rng).expect("principals").clone()
                };
                let node = *[LOGIN_NODES[0], LOGIN_NODES[1], MGMT_NODES[0]].choose(&mut rng).expect("nodes");
                let live = env.p.gateway.open_bastion_session(line, &as_whom, node).is_ok();
                let creds = CredentialSet {
                    tokens: Vec::new(),
                    certificates: vec![(line.clone(), as_whom.clone())],
                };
                let oracle = LOGIN_NODES.contains(&node) && reach(&creds, node);
                (format!("ssh {as_whom}@{node}"), live, oracle)
            }
            _ => {
                env.advance(Duration::from_secs(rng.gen_range(0..1500)));
                continue;
            }
        };
        if live {
            report.allowed += 1;
        }
        if live != oracle {
            report.mismatches.push(format!("seed {seed} op {n}: {desc}: live {live}, oracle {oracle}"));
        }
    }
}

pub fn run_adversarial(scripts: usize, ops: usize) -> AdversarialReport {
    let mut report = AdversarialReport {
        scripts,
        ..Default::default()
    };
    for seed in 0..scripts as u64 {
        run_script(seed, ops, &mut report);
    }
    report
}
