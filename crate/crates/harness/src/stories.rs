//! The six scripted user stories.

use std::time::Duration;

use gatekeep_core::broker::AuthSession;
use gatekeep_core::gateway::{BackendRequest, KillScope};
use gatekeep_core::registry::{Allocation, NewProject, Project, RevokeTarget, Role};
use gatekeep_core::sshca::cert::SshCertificate;
use gatekeep_core::sshca::config::{aliases, render_ssh_config};

use crate::env::{user_key, Env, DAY, JUPYTER_AUDIENCE, JUPYTER_CLIENT, JUPYTER_PATH};
use crate::scenario::{code, Expect, Runner, Transcript};

pub const STORIES: [(u8, &str); 6] = [
    (1, "PI with an allocation is invited and registers"),
    (2, "administrator registers an administrators-only account"),
    (3, "researcher sets up an account"),
    (4, "researcher connects over SSH"),
    (5, "administrator reaches the management plane"),
    (6, "researcher opens a Jupyter notebook"),
];

pub fn title(story: u8) -> Option<&'static str> {
    STORIES.iter().find(|(n, _)| *n == story).map(|(_, t)| *t)
}

/// Runs one story on a fresh platform.
pub fn run_scenario(story: u8) -> Option<Transcript> {
    let env = Env::new();
    run_on(&env, story, &format!("story{story}"))
}

/// Runs one story on `env`. Used by the stress mode to share a platform.
pub fn run_on(env: &Env, story: u8, prefix: &str) -> Option<Transcript> {
    let mut r = Runner::new(story, title(story)?, prefix);
    let done = match story {
        1 => story1(env, &mut r, prefix),
        2 => story2(env, &mut r, prefix),
        3 => story3(env, &mut r, prefix),
        4 => story4(env, &mut r, prefix),
        5 => story5(env, &mut r, prefix),
        6 => story6(env, &mut r, prefix, &format!("src-{prefix}")),
        _ => None,
    };
    if done.is_none() {
        r.abort();
    }
    Some(r.finish(env.p.siem.store()))
}

fn login(env: &Env, r: &mut Runner, actor: &str, idp: &str, subject: &str, email: &str, expect: Expect) -> Option<Option<AuthSession>> {
    let a = env.assertion(idp, subject, email);
    r.step(actor, &format!("authenticate via {idp}"), expect, &["auth.login"], || {
        env.p.broker.authenticate(idp, &a).map_err(code)
    })
}

fn register(env: &Env, r: &mut Runner, actor: &str, idp: &str, subject: &str, email: &str, invitation: &str, expect: Expect) -> Option<Option<()>> {
    let a = env.assertion(idp, subject, email);
    r.step(actor, &format!("register via {idp}"), expect, &["identity.register"], || {
        env.p.broker.register_identity(&a, invitation).map(|_| ()).map_err(code)
    })
}

fn token(env: &Env, r: &mut Runner, actor: &str, s: &AuthSession, aud: &str, expect: Expect) -> Option<Option<String>> {
    r.step(actor, &format!("request {aud} token"), expect, &["token.issue"], || {
        env.p.tokens.issue_token(s, aud, None, None).map(|t| t.token).map_err(code)
    })
}

fn validate(env: &Env, r: &mut Runner, actor: &str, tok: &str, aud: &str, expect: Expect) -> Option<Option<()>> {
    r.step(actor, &format!("validate {aud} token"), expect, &["token.introspect"], || {
        env.p.tokens.validate_token(tok, aud).map(|_| ()).map_err(code)
    })
}

fn invite(env: &Env, r: &mut Runner, actor: &str, s: &AuthSession, email: &str, project: &Project, role: Role, expect: Expect) -> Option<Option<String>> {
    r.step(actor, &format!("invite {email} as {role}"), expect, &["invitation.create"], || {
        env.p.registry.invite(s, email, &project.project_id, role).map(|i| i.token).map_err(code)
    })
}

fn advance(env: &Env, r: &mut Runner, by: Duration) -> Option<()> {
    r.check("clock", &format!("advance {}s", by.as_secs()), || {
        env.advance(by);
        Ok(())
    })
}

fn ensure(cond: bool, what: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(format!("does not hold: {what}"))
    }
}

/// A unique slug for objects a story creates, so parallel runs on one
/// platform do not collide.
fn slug(prefix: &str, base: &str) -> String {
    let digits: String = prefix.chars().filter(char::is_ascii_digit).collect();
    let tail = if digits.is_empty() { String::new() } else { format!("{}", digits.parse::<u64>().unwrap_or(0)) };
    let mut s = format!("{base}{tail}");
    s.truncate(16);
    s
}

/// Flips one character in the signature part of a compact token.
pub fn forge(token: &str) -> String {
    let mut chars: Vec<char> = token.chars().collect();
    let i = chars.len() - 2;
    chars[i] = if chars[i] == 'A' { 'B' } else { 'A' };
    chars.into_iter().collect()
}

fn story1(env: &Env, r: &mut Runner, prefix: &str) -> Option<()> {
    let code_ = slug(prefix, "camels");
    let pi_email = format!("pi-{code_}@uni");
    let vendor_email = format!("vendor-{code_}@corp");
    let alloc = login(env, r, "allocator", "admin-cloud", "alloc", crate::env::ALLOC_EMAIL, Expect::Allow)??;
    let now = env.now();
    let project = r.step("allocator", "create project with a 90 day allocation", Expect::Allow, &["project.create"], || {
        env.p
            .registry
            .create_project(
                &alloc,
                NewProject {
                    code: code_.clone(),
                    title: "Camel genomics".into(),
                    allocation: Allocation::default(),
                    starts_at: now,
                    expires_at: now + DAY * 90,
                },
            )
            .map_err(code)
    })??;
    let inv = invite(env, r, "allocator", &alloc, &pi_email, &project, Role::Pi, Expect::Allow)??;
    register(env, r, "outsider", "myaccessid", "outsider", "outsider@elsewhere", &inv, Expect::deny("NoMatchingAuthorization"))?;
    login(env, r, "outsider", "myaccessid", "outsider", "outsider@elsewhere", Expect::deny("UnregisteredIdentity"))?;
    let pi_sub = format!("pi-{code_}");
    register(env, r, "pi", "myaccessid", &pi_sub, &pi_email, &inv, Expect::Allow)?;
    let pi = login(env, r, "pi", "myaccessid", &pi_sub, &pi_email, Expect::Allow)??;
    r.check("pi", "PI binding and a project account exist", || {
        let auth = env.p.registry.authorizations_for(&pi.persistent_id);
        ensure(auth.role_on(&project.project_id) == Some(Role::Pi), "PI role on the project")?;
        ensure(
            auth.linux_accounts.len() == 1 && auth.linux_accounts[0].username.starts_with(&format!("{code_}-")),
            "one account named after the project",
        )
    })?;
    token(env, r, "pi", &pi, "portal", Expect::Allow)?;
    register(env, r, "pi", "myaccessid", &format!("{pi_sub}-again"), &pi_email, &inv, Expect::deny("NoMatchingAuthorization"))?;
    r.step("pi", "accept the used invitation again", Expect::deny("AlreadyConsumed"), &["invitation.accept"], || {
        env.p.registry.accept_invitation(&inv, &pi.persistent_id).map(|_| ()).map_err(code)
    })?;

    let inv2 = invite(env, r, "allocator", &alloc, &vendor_email, &project, Role::Pi, Expect::Allow)??;
    let vendor_sub = format!("vendor-{code_}");
    register(env, r, "vendor-pi", "last-resort", &vendor_sub, &vendor_email, &inv2, Expect::Allow)?;
    let no_mfa = env.p.simulated_idp("last-resort")?.assert(&vendor_sub, &vendor_email, false, env.now());
    r.step("vendor-pi", "authenticate via last-resort without MFA", Expect::deny("MfaRequired"), &["auth.login"], || {
        env.p.broker.authenticate("last-resort", &no_mfa).map(|_| ()).map_err(code)
    })?;
    login(env, r, "vendor-pi", "last-resort", &vendor_sub, &vendor_email, Expect::Allow)?;

    advance(env, r, DAY * 91)?;
    let alloc = login(env, r, "allocator", "admin-cloud", "alloc", crate::env::ALLOC_EMAIL, Expect::Allow)??;
    r.step("allocator", "sweep expired projects", Expect::Allow, &["project.sweep"], || {
        let n = env.p.registry.sweep_expiry_as(&alloc).map_err(code)?;
        ensure(n >= 1, "the project expired")
    })?;
    let pi = login(env, r, "pi", "myaccessid", &pi_sub, &pi_email, Expect::Allow)??;
    token(env, r, "pi", &pi, "ssh-ca", Expect::deny("NotAuthorized"))?;
    r.check("pi", "authorization list is empty", || {
        ensure(env.p.registry.authorizations_for(&pi.persistent_id).is_empty(), "no bindings or accounts")
    })
}

fn story2(env: &Env, r: &mut Runner, prefix: &str) -> Option<()> {
    let who = slug(prefix, "ops");
    let email = format!("{who}@hpc");
    let admin = login(env, r, "admin", "admin-cloud", "admin", crate::env::ADMIN_EMAIL, Expect::Allow)??;
    let inv = r.step("admin", "invite a new administrator", Expect::Allow, &["invitation.create"], || {
        env.p.registry.invite_platform(&admin, &email, Role::Admin).map(|i| i.token).map_err(code)
    })??;
    register(env, r, "new-admin", "myaccessid", &who, &email, &inv, Expect::deny("AdminIdPRequired"))?;
    let no_mfa = env.p.simulated_idp("admin-cloud")?.assert(&who, &email, false, env.now());
    r.step("new-admin", "register via admin-cloud without MFA", Expect::deny("MfaRequired"), &["identity.register"], || {
        env.p.broker.register_identity(&no_mfa, &inv).map(|_| ()).map_err(code)
    })?;
    register(env, r, "new-admin", "admin-cloud", &who, &email, &inv, Expect::Allow)?;
    let me = login(env, r, "new-admin", "admin-cloud", &who, &email, Expect::Allow)??;
    let mgmt = token(env, r, "new-admin", &me, "mgmt:tailnet", Expect::Allow)??;
    token(env, r, "new-admin", &me, JUPYTER_AUDIENCE, Expect::deny("NotAuthorized"))?;
    token(env, r, "new-admin", &me, "ssh-ca", Expect::deny("NotAuthorized"))?;
    r.step("new-admin", "connect to mdc.mgmt-ai1", Expect::Allow, &["mgmt.connect"], || {
        env.p.mgmt.connect(Some(&mgmt), "mdc.mgmt-ai1").map(|_| ()).map_err(code)
    })?;
    r.step("admin", "revoke the new administrator's role", Expect::Allow, &["membership.revoke"], || {
        let target = RevokeTarget::Platform {
            persistent_id: me.persistent_id.clone(),
            role: Role::Admin,
        };
        env.p.registry.revoke(&admin, &target).map(|_| ()).map_err(code)
    })?;
    validate(env, r, "new-admin", &mgmt, "mgmt:tailnet", Expect::deny("Revoked"))?;
    r.step("new-admin", "connect to mdc.mgmt-ai1", Expect::deny("TokenInvalid/Revoked"), &["mgmt.connect"], || {
        env.p.mgmt.connect(Some(&mgmt), "mdc.mgmt-ai1").map(|_| ()).map_err(code)
    })?;
    let me = login(env, r, "new-admin", "admin-cloud", &who, &email, Expect::Allow)??;
    token(env, r, "new-admin", &me, "mgmt:tailnet", Expect::deny("NotAuthorized"))?;
    Some(())
}

/// Project plus PI, created outside the transcript.
fn setup_project(env: &Env, prefix: &str, base: &str) -> (Project, String) {
    let code_ = slug(prefix, base);
    let project = env.project(&code_, 30);
    let pi_sub = format!("pi-{code_}");
    env.pi(&project, &pi_sub);
    (project, pi_sub)
}

fn story3(env: &Env, r: &mut Runner, prefix: &str) -> Option<()> {
    let (project, pi_sub) = setup_project(env, prefix, "otters");
    let pi = env.relogin(&pi_sub);
    let res_sub = format!("res-{}", project.code);
    let res_email = format!("{res_sub}@uni");
    let inv = invite(env, r, "pi", &pi, &res_email, &project, Role::Researcher, Expect::Allow)??;
    register(env, r, "researcher", "myaccessid", &res_sub, &res_email, &inv, Expect::Allow)?;
    let res = login(env, r, "researcher", "myaccessid", &res_sub, &res_email, Expect::Allow)??;
    r.check("researcher", "own project account distinct from the PI's", || {
        let mine = env.p.registry.authorizations_for(&res.persistent_id).linux_accounts;
        let theirs = env.p.registry.authorizations_for(&pi.persistent_id).linux_accounts;
        ensure(mine.len() == 1 && theirs.len() == 1, "one account each")?;
        ensure(mine[0].username != theirs[0].username, "distinct usernames")
    })?;
    invite(env, r, "researcher", &res, &format!("friend-{}@uni", project.code), &project, Role::Researcher, Expect::deny("Forbidden"))?;
    r.check("researcher", "sees only researcher functions", || {
        use gatekeep_core::registry::RegistryAction;
        let reg = &env.p.registry;
        ensure(!reg.may(&res.persistent_id, RegistryAction::InviteResearcher, Some(&project.project_id)), "cannot invite")?;
        ensure(reg.may(&pi.persistent_id, RegistryAction::InviteResearcher, Some(&project.project_id)), "PI can invite")
    })?;
    let tok = token(env, r, "researcher", &res, JUPYTER_AUDIENCE, Expect::Allow)??;
    validate(env, r, "researcher", &tok, JUPYTER_AUDIENCE, Expect::Allow)?;
    r.step("pi", "remove the researcher from the project", Expect::Allow, &["membership.revoke"], || {
        let target = RevokeTarget::Member {
            persistent_id: res.persistent_id.clone(),
            project_id: project.project_id.clone(),
        };
        env.p.registry.revoke(&pi, &target).map(|_| ()).map_err(code)
    })?;
    validate(env, r, "researcher", &tok, JUPYTER_AUDIENCE, Expect::deny("Revoked"))?;
    token(env, r, "researcher", &res, JUPYTER_AUDIENCE, Expect::deny("NotAuthorized"))?;

    let gone_sub = format!("left-{}", project.code);
    let gone_email = format!("{gone_sub}@uni");
    let inv = invite(env, r, "pi", &pi, &gone_email, &project, Role::Researcher, Expect::Allow)??;
    register(env, r, "leaver", "myaccessid", &gone_sub, &gone_email, &inv, Expect::Allow)?;
    let gone = login(env, r, "leaver", "myaccessid", &gone_sub, &gone_email, Expect::Allow)??;
    let admin = login(env, r, "admin", "admin-cloud", "admin", crate::env::ADMIN_EMAIL, Expect::Allow)??;
    r.step("admin", "suspend the leaver's identity", Expect::Allow, &["identity.suspend"], || {
        env.p.broker.suspend_identity(&admin, &gone.persistent_id).map(|_| ()).map_err(code)
    })?;
    login(env, r, "leaver", "myaccessid", &gone_sub, &gone_email, Expect::deny("IdentitySuspended"))?;
    Some(())
}

fn bastion(env: &Env, r: &mut Runner, cert: &str, principal: &str, target: &str, expect: Expect) -> Option<Option<()>> {
    r.step("researcher", &format!("ssh {principal}@{target} via bastion"), expect, &["bastion.open"], || {
        env.p.gateway.open_bastion_session(cert, principal, target).map(|_| ()).map_err(code)
    })
}

fn story4(env: &Env, r: &mut Runner, prefix: &str) -> Option<()> {
    let (project, pi_sub) = setup_project(env, prefix, "ssh");
    let pi = env.relogin(&pi_sub);
    let sub = format!("res-{}", project.code);
    env.researcher(&pi, &project, &sub);
    let email = format!("{sub}@uni");
    let (_, key) = user_key(&sub);

    let s = login(env, r, "researcher", "myaccessid", &sub, &email, Expect::Allow)??;
    let tok = token(env, r, "researcher", &s, "ssh-ca", Expect::Allow)??;
    let issued = r.step("researcher", "sign public key", Expect::Allow, &["cert.sign"], || {
        env.p.ca.sign_user_key(&tok, &key).map_err(code)
    })??;
    let principal = issued.principals.first()?.clone();
    r.check("researcher", "certificate lists the project account and lives 8 hours", || {
        ensure(issued.principals.len() == 1 && principal.starts_with(&format!("{}-", project.code)), "one principal")?;
        ensure((issued.valid_before.0 - env.now().0) == 8 * 3600, "8 hour lifetime")
    })?;
    r.check("researcher", "ssh config alias hides the jump host", || {
        let cert = SshCertificate::from_openssh(&issued.certificate).map_err(|e| e.to_string())?;
        let block = render_ssh_config(&cert, &issued.projects, &env.p.ssh_params(None), env.now()).map_err(|e| e.to_string())?;
        ensure(aliases(&block) == vec![format!("{}.{}", project.code, env.p.config.cluster_domain)], "one alias")?;
        ensure(block.contains(&format!("ProxyJump {}", env.p.config.jump_host)), "jump host")
    })?;
    let pi_account = env.p.registry.authorizations_for(&pi.persistent_id).linux_accounts.first()?.username.clone();
    bastion(env, r, &issued.certificate, &principal, "mdc.login-ai1", Expect::Allow)?;
    bastion(env, r, &issued.certificate, &pi_account, "mdc.login-ai1", Expect::deny("CertificateRejected/PrincipalNotListed"))?;
    bastion(env, r, &issued.certificate, &principal, "mdc.mgmt-ai1", Expect::deny("UnknownTarget"))?;
    r.step("researcher", "sign a malformed key", Expect::deny("MalformedKey"), &["cert.sign"], || {
        env.p.ca.sign_user_key(&tok, "ssh-rsa AAAA not-a-key").map(|_| ()).map_err(code)
    })?;
    advance(env, r, Duration::from_secs(8 * 3600))?;
    bastion(env, r, &issued.certificate, &principal, "mdc.login-i3", Expect::deny("CertificateRejected/Expired"))?;
    let s = login(env, r, "researcher", "myaccessid", &sub, &email, Expect::Allow)??;
    let tok = token(env, r, "researcher", &s, "ssh-ca", Expect::Allow)??;
    let renewed = r.step("researcher", "sign public key again", Expect::Allow, &["cert.sign"], || {
        env.p.ca.sign_user_key(&tok, &key).map_err(code)
    })??;
    bastion(env, r, &renewed.certificate, &principal, "mdc.login-i3", Expect::Allow).map(|_| ())
}

fn story5(env: &Env, r: &mut Runner, prefix: &str) -> Option<()> {
    let (_, pi_sub) = setup_project(env, prefix, "mgmt");
    let admin = login(env, r, "admin", "admin-cloud", "admin", crate::env::ADMIN_EMAIL, Expect::Allow)??;
    let mgmt = token(env, r, "admin", &admin, "mgmt:tailnet", Expect::Allow)??;
    let connect = |r: &mut Runner, actor: &str, tok: Option<&str>, node: &str, expect: Expect| {
        r.step(actor, &format!("connect to {node} over the tailnet"), expect, &["mgmt.connect"], || {
            env.p.mgmt.connect(tok, node).map(|_| ()).map_err(code)
        })
    };
    connect(r, "admin", Some(&mgmt), "mdc.mgmt-ai1", Expect::Allow)?;
    connect(r, "admin", Some(&mgmt), "mdc.mgmt-i3", Expect::Allow)?;
    connect(r, "admin", Some(&mgmt), "mdc.login-ai1", Expect::deny("UnknownTarget"))?;
    connect(r, "anonymous", None, "mdc.mgmt-ai1", Expect::deny("Unauthenticated"))?;

    let pi_email = format!("{pi_sub}@uni");
    let pi = login(env, r, "pi", "myaccessid", &pi_sub, &pi_email, Expect::Allow)??;
    token(env, r, "pi", &pi, "mgmt:tailnet", Expect::deny("AdminIdPRequired"))?;
    let portal = token(env, r, "pi", &pi, "portal", Expect::Allow)??;
    connect(r, "pi", Some(&portal), "mdc.mgmt-ai1", Expect::deny("TokenInvalid/AudienceMismatch"))?;
    connect(r, "pi", Some(&forge(&mgmt)), "mdc.mgmt-ai1", Expect::deny("TokenInvalid/BadSignature"))?;

    let ks = token(env, r, "admin", &admin, "mgmt:killswitch", Expect::Allow)??;
    let scope = KillScope::User {
        persistent_id: admin.persistent_id.clone(),
    };
    r.step("admin", "engage a kill switch on their own identity", Expect::Allow, &["killswitch.set"], || {
        env.p.gateway.set_kill_switch(&ks, &scope, true).map(|_| ()).map_err(code)
    })?;
    connect(r, "admin", Some(&mgmt), "mdc.mgmt-ai1", Expect::deny("KillSwitched"))?;
    r.step("admin", "release the kill switch", Expect::Allow, &["killswitch.set"], || {
        env.p.gateway.set_kill_switch(&ks, &scope, false).map(|_| ()).map_err(code)
    })?;
    connect(r, "admin", Some(&mgmt), "mdc.mgmt-ai1", Expect::Allow)?;
    advance(env, r, Duration::from_secs(15 * 60))?;
    connect(r, "admin", Some(&mgmt), "mdc.mgmt-ai1", Expect::deny("TokenInvalid/Expired"))?;
    Some(())
}

fn get(path: &str) -> BackendRequest {
    BackendRequest {
        method: "GET".into(),
        path: path.into(),
        headers: Default::default(),
        body: String::new(),
    }
}

fn story6(env: &Env, r: &mut Runner, prefix: &str, source: &str) -> Option<()> {
    let (project, pi_sub) = setup_project(env, prefix, "nb");
    let pi = env.relogin(&pi_sub);
    let sub = format!("res-{}", project.code);
    env.researcher(&pi, &project, &sub);
    let email = format!("{sub}@uni");

    if env.p.gateway.endpoints().iter().all(|e| e.path != JUPYTER_PATH) {
        let admin = login(env, r, "admin", "admin-cloud", "admin", crate::env::ADMIN_EMAIL, Expect::Allow)??;
        let svc = token(env, r, "admin", &admin, "tunnel-admin", Expect::Allow)??;
        r.step("admin", "register /jupyter on the login node tunnel", Expect::Allow, &["tunnel.register"], || {
            env.p.gateway.register_tunnel(&svc, JUPYTER_PATH, JUPYTER_CLIENT).map(|_| ()).map_err(code)
        })?;
    }
    let browse = |r: &mut Runner, actor: &str, path: &str, tok: Option<&str>, expect: Expect, audited: &[&str]| {
        r.step(actor, &format!("GET {path}"), expect, audited, || {
            let resp = env.p.gateway.route_web_request(source, get(path), tok).map_err(code)?;
            if resp.status != 200 {
                return Err(format!("Backend{}", resp.status));
            }
            serde_json::from_str::<serde_json::Value>(&resp.body).map_err(|e| e.to_string())
        })
    };
    let before = env.jupyter.invocations().len();
    browse(r, "anonymous", JUPYTER_PATH, None, Expect::deny("Unauthenticated"), &["gateway.route"])?;
    r.check("anonymous", "backend never saw the request", || {
        ensure(env.jupyter.invocations().len() == before, "no invocation")
    })?;
    let s = login(env, r, "researcher", "myaccessid", &sub, &email, Expect::Allow)??;
    let tok = token(env, r, "researcher", &s, JUPYTER_AUDIENCE, Expect::Allow)??;
    let body = browse(r, "researcher", JUPYTER_PATH, Some(&tok), Expect::Allow, &["gateway.route", "token.introspect"])??;
    r.check("researcher", "notebook spawned for this identity and session", || {
        ensure(body["user"] == s.persistent_id.as_str(), "user in response")?;
        let spawns: Vec<_> = env.jupyter.spawns().into_iter().filter(|sp| sp.session_id == s.session_id).collect();
        ensure(spawns.len() == 1, "one spawn")?;
        ensure(spawns[0].persistent_id == s.persistent_id, "spawn owner")?;
        ensure(spawns[0].project_scope.as_deref() == Some(project.project_id.as_str()), "spawn scope")
    })?;
    browse(r, "researcher", &format!("{JUPYTER_PATH}/lab"), Some(&tok), Expect::Allow, &["gateway.route", "token.introspect"])?;
    r.check("researcher", "second request reuses the session", || {
        ensure(env.jupyter.spawns().iter().filter(|sp| sp.session_id == s.session_id).count() == 1, "still one spawn")
    })?;
    browse(r, "attacker", JUPYTER_PATH, Some(&forge(&tok)), Expect::deny("Unauthenticated"), &["gateway.route"])?;
    let portal = token(env, r, "researcher", &s, "portal", Expect::Allow)??;
    browse(r, "researcher", JUPYTER_PATH, Some(&portal), Expect::deny("Unauthenticated"), &["gateway.route"])?;
    browse(r, "researcher", "/grafana", Some(&tok), Expect::deny("NotFound"), &["gateway.route"])?;
    r.check("researcher", "every backend invocation carried a validated header", || {
        ensure(env.jupyter.invocations()[before..].iter().all(|i| i.header_validated), "validated")
    })?;
    Some(())
}
