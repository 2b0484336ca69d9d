//! The fixed principal set the access matrix is computed over.

use std::time::Duration;

use gatekeep_core::broker::AuthSession;
use gatekeep_core::registry::RevokeTarget;

use crate::env::{user_key, Env, JUPYTER_AUDIENCE};
use crate::reach::CredentialSet;

pub const PRINCIPALS: [&str; 6] = ["anonymous", "researcher", "pi", "admin", "admin_expired", "researcher_revoked"];

/// Everything a project member can obtain: portal, SSH-CA and Jupyter
/// tokens plus a certificate for their first account.
pub fn member_credentials(env: &Env, s: &AuthSession, label: &str) -> CredentialSet {
    let t = &env.p.tokens;
    let mut creds = CredentialSet::default();
    for aud in ["portal", "ssh-ca", JUPYTER_AUDIENCE] {
        creds.tokens.push(t.issue_token(s, aud, None, None).expect("member token").token);
    }
    let (_, key) = user_key(label);
    let cert = env.p.ca.sign_user_key(&creds.tokens[1], &key).expect("certificate");
    creds.certificates.push((cert.certificate, cert.principals[0].clone()));
    creds
}

pub fn admin_credentials(env: &Env) -> CredentialSet {
    let t = &env.p.tokens;
    let a = env.admin();
    CredentialSet {
        tokens: ["mgmt:tailnet", "mgmt:killswitch", "tunnel-admin", "portal"]
            .iter()
            .map(|aud| t.issue_token(&a, aud, None, None).expect("admin token").token)
            .collect(),
        certificates: Vec::new(),
    }
}

/// Builds the six principals on `env`. Advances the clock by 16 minutes so
/// the first admin credential set has expired.
pub fn build_principals(env: &Env) -> Vec<(String, CredentialSet)> {
    let admin_expired = admin_credentials(env);
    env.advance(Duration::from_secs(16 * 60));

    let project = env.project("matrix", 30);
    let pi = env.pi(&project, "mpi");
    let researcher = env.researcher(&pi, &project, "mres");
    let revoked = env.researcher(&pi, &project, "mrev");

    let pi_creds = member_credentials(env, &pi, "mpi");
    let res_creds = member_credentials(env, &researcher, "mres");
    let rev_creds = member_credentials(env, &revoked, "mrev");
    let pi = env.relogin("mpi");
    env.p
        .registry
        .revoke(
            &pi,
            &RevokeTarget::Member {
                persistent_id: revoked.persistent_id.clone(),
                project_id: project.project_id.clone(),
            },
        )
        .expect("revoke");

    vec![
        ("anonymous".into(), CredentialSet::default()),
        ("researcher".into(), res_creds),
        ("pi".into(), pi_creds),
        ("admin".into(), admin_credentials(env)),
        ("admin_expired".into(), admin_expired),
        ("researcher_revoked".into(), rev_creds),
    ]
}
