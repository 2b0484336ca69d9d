use std::collections::BTreeMap;
use std::time::Duration;

use gatekeep_core::audit::SourceDomain;
use gatekeep_harness::principals::{admin_credentials, build_principals, member_credentials, PRINCIPALS};
use gatekeep_harness::stories::forge;
use gatekeep_harness::topology::{Zone, INTERNET};
use gatekeep_harness::{build_default_topology, check_reachability, enumerate_access_matrix, CredentialSet, Env, ReachError};
use proptest::prelude::*;

const TARGETS: [&str; 9] = [
    "fds.login",
    "fds.ssh-ca",
    "mdc.jupyter",
    "mdc.login-ai1",
    "mdc.login-i3",
    "mdc.mgmt-ai1",
    "mdc.mgmt-i3",
    "mdc.storage",
    "sec.siem",
];

/// Written out by hand from the topology and role rules.
fn expected() -> BTreeMap<&'static str, Vec<&'static str>> {
    BTreeMap::from([
        ("anonymous", vec!["fds.login"]),
        ("researcher", vec!["fds.login", "fds.ssh-ca", "mdc.jupyter", "mdc.login-ai1", "mdc.login-i3"]),
        ("pi", vec!["fds.login", "fds.ssh-ca", "mdc.jupyter", "mdc.login-ai1", "mdc.login-i3"]),
        ("admin", vec!["fds.login", "mdc.mgmt-ai1", "mdc.mgmt-i3", "mdc.storage"]),
        ("admin_expired", vec!["fds.login"]),
        // The certificate outlives the membership; its lifetime is the bound.
        ("researcher_revoked", vec!["fds.login", "mdc.login-ai1", "mdc.login-i3"]),
    ])
}

#[test]
fn matrix_equals_the_hand_written_table() {
    let env = Env::new();
    let principals = build_principals(&env);
    let m = enumerate_access_matrix(&build_default_topology(), &env.p, &principals);
    assert_eq!(m.keys().map(String::as_str).collect::<Vec<_>>().len(), PRINCIPALS.len());
    for (who, allowed) in expected() {
        let row = &m[who];
        assert_eq!(row.keys().map(String::as_str).collect::<Vec<_>>(), TARGETS, "{who} row is complete");
        for t in TARGETS {
            assert_eq!(row[t], allowed.contains(&t), "{who} -> {t}");
        }
    }
}

#[test]
fn anonymous_reaches_nothing_inside() {
    let env = Env::new();
    let g = build_default_topology();
    for n in g.targets() {
        let r = check_reachability(&g, &env.p, &CredentialSet::default(), &n.id).unwrap();
        let inside = matches!(n.domain, Some(SourceDomain::Mdc) | Some(SourceDomain::Sec)) || n.zone == Zone::Management;
        if inside {
            assert!(!r.reachable, "{}", n.id);
        }
    }
}

#[test]
fn researcher_certificate_reaches_login_node_via_bastion() {
    let env = Env::new();
    let project = env.project("rp", 10);
    let pi = env.pi(&project, "rpi");
    let s = env.researcher(&pi, &project, "rres");
    let creds = member_credentials(&env, &s, "rres");
    let g = build_default_topology();
    let ssh_only = CredentialSet {
        tokens: Vec::new(),
        certificates: creds.certificates.clone(),
    };
    let r = check_reachability(&g, &env.p, &ssh_only, "mdc.login-ai1").unwrap();
    assert!(r.reachable);
    assert_eq!(r.witness, vec![INTERNET, "sws.bastion", "mdc.login-ai1"]);

    let tokens_only = CredentialSet {
        tokens: creds.tokens.clone(),
        certificates: Vec::new(),
    };
    for node in ["mdc.mgmt-ai1", "mdc.mgmt-i3", "mdc.storage", "mdc.login-i3"] {
        assert!(!check_reachability(&g, &env.p, &tokens_only, node).unwrap().reachable, "{node}");
    }
    let r = check_reachability(&g, &env.p, &tokens_only, "mdc.jupyter").unwrap();
    assert_eq!(r.witness, vec![INTERNET, "fds.login", "mdc.jupyter"]);
}

#[test]
fn expired_admin_token_is_denied() {
    let env = Env::new();
    let g = build_default_topology();
    let admin = admin_credentials(&env);
    assert!(check_reachability(&g, &env.p, &admin, "mdc.mgmt-ai1").unwrap().reachable);
    env.advance(Duration::from_secs(15 * 60));
    assert!(!check_reachability(&g, &env.p, &admin, "mdc.mgmt-ai1").unwrap().reachable);
}

#[test]
fn a_forged_admin_token_is_not_a_credential() {
    let env = Env::new();
    let g = build_default_topology();
    let forged = CredentialSet {
        tokens: admin_credentials(&env).tokens.iter().map(|t| forge(t)).collect(),
        certificates: Vec::new(),
    };
    assert!(!check_reachability(&g, &env.p, &forged, "mdc.mgmt-ai1").unwrap().reachable);
}

#[test]
fn unknown_target() {
    let env = Env::new();
    let g = build_default_topology();
    assert_eq!(
        check_reachability(&g, &env.p, &CredentialSet::default(), "mdc.gpu-farm"),
        Err(ReachError::UnknownTarget("mdc.gpu-farm".into()))
    );
}

#[test]
fn everything_without_admin_roots_stays_out_of_management() {
    let env = Env::new();
    let g = build_default_topology();
    let all = build_principals(&env);
    let mut union = CredentialSet::default();
    for (name, creds) in &all {
        if name.starts_with("admin") {
            union.tokens.extend(creds.tokens.iter().map(|t| forge(t)));
        } else {
            union = union.union(creds);
        }
    }
    for node in ["mdc.mgmt-ai1", "mdc.mgmt-i3", "mdc.storage", "sec.siem"] {
        assert!(!check_reachability(&g, &env.p, &union, node).unwrap().reachable, "{node}");
    }
}

fn allow_count(env: &Env, creds: &CredentialSet) -> usize {
    let g = build_default_topology();
    let m = enumerate_access_matrix(&g, &env.p, &[("x".into(), creds.clone())]);
    m["x"].values().filter(|v| **v).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Dropping any one credential never grants more.
    #[test]
    fn access_is_monotone_in_credentials(picks in proptest::collection::vec(any::<bool>(), 20), drop in 0usize..20) {
        let env = Env::new();
        let all = build_principals(&env);
        let mut items: Vec<CredentialSet> = Vec::new();
        for (_, c) in &all {
            for t in &c.tokens {
                items.push(CredentialSet { tokens: vec![t.clone()], certificates: vec![] });
            }
            for cert in &c.certificates {
                items.push(CredentialSet { tokens: vec![], certificates: vec![cert.clone()] });
            }
        }
        let chosen: Vec<&CredentialSet> = items.iter().zip(picks.iter().cycle()).filter(|(_, p)| **p).map(|(c, _)| c).collect();
        prop_assume!(!chosen.is_empty());
        let full = chosen.iter().fold(CredentialSet::default(), |acc, c| acc.union(c));
        let skip = drop % chosen.len();
        let less = chosen.iter().enumerate().filter(|(i, _)| *i != skip).fold(CredentialSet::default(), |acc, (_, c)| acc.union(c));
        prop_assert!(allow_count(&env, &less) <= allow_count(&env, &full));
    }
}
