//! A platform on a virtual clock plus the helpers every harness mode needs.

use std::sync::Arc;
use std::time::Duration;

use gatekeep_core::broker::{AuthSession, IdPAssertion};
use gatekeep_core::crypto::KeyPair;
use gatekeep_core::registry::{Allocation, NewProject, Project, Role};
use gatekeep_core::sshca::cert::public_key_line;
use gatekeep_core::stubs::JupyterAuthenticator;
use gatekeep_core::token::Introspector;
use gatekeep_core::{Clock, Platform, PlatformConfig, Timestamp, VirtualClock};

pub const DAY: Duration = Duration::from_secs(86_400);
pub const JUPYTER_CLIENT: &str = "zenith-1";
pub const JUPYTER_PATH: &str = "/jupyter";
pub const JUPYTER_AUDIENCE: &str = "tunnel:jupyter";
pub const ADMIN_EMAIL: &str = "admin@hpc";
pub const ALLOC_EMAIL: &str = "alloc@hpc";

pub struct Env {
    pub clock: Arc<VirtualClock>,
    pub p: Platform,
    pub jupyter: Arc<JupyterAuthenticator>,
}

impl Default for Env {
    fn default() -> Self {
        Env::new()
    }
}

impl Env {
    /// Platform with an administrator and an allocator registered and a
    /// Jupyter backend connected but no tunnel registered yet.
    pub fn new() -> Self {
        Env::with_config(PlatformConfig::default())
    }

    pub fn with_config(config: PlatformConfig) -> Self {
        let clock = Arc::new(VirtualClock::new(Timestamp(1_767_225_600)));
        let config = PlatformConfig {
            bootstrap: vec![(ADMIN_EMAIL.into(), Role::Admin), (ALLOC_EMAIL.into(), Role::Allocator)],
            key_label: config.key_label.clone().or_else(|| Some("harness".into())),
            ..config
        };
        let p = Platform::new(config, clock.clone()).expect("platform");
        for (idx, (subject, email)) in [("admin", ADMIN_EMAIL), ("alloc", ALLOC_EMAIL)].into_iter().enumerate() {
            let sim = p.simulated_idp("admin-cloud").expect("admin idp");
            let a = sim.assert(subject, email, true, p.clock.now());
            p.broker.register_identity(&a, &p.bootstrap_invitations[idx].token).expect("bootstrap");
        }
        let introspector: Arc<dyn Introspector> = p.tokens.clone();
        let jupyter = Arc::new(JupyterAuthenticator::new(introspector, JUPYTER_AUDIENCE));
        p.gateway.connect_client(JUPYTER_CLIENT, jupyter.clone());
        Env { clock, p, jupyter }
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn advance(&self, by: Duration) {
        self.clock.advance(by);
    }

    /// Assertion from a simulated IdP, with MFA satisfied where the IdP
    /// demands it.
    pub fn assertion(&self, idp: &str, subject: &str, email: &str) -> IdPAssertion {
        let sim = self.p.simulated_idp(idp).expect("known idp");
        sim.assert(subject, email, sim.provider().mfa_required, self.clock.now())
    }

    pub fn login(&self, idp: &str, subject: &str, email: &str) -> AuthSession {
        self.p.broker.authenticate(idp, &self.assertion(idp, subject, email)).expect("login")
    }

    pub fn admin(&self) -> AuthSession {
        self.login("admin-cloud", "admin", ADMIN_EMAIL)
    }

    pub fn alloc(&self) -> AuthSession {
        self.login("admin-cloud", "alloc", ALLOC_EMAIL)
    }

    pub fn project(&self, code: &str, days: u32) -> Project {
        let now = self.clock.now();
        self.p
            .registry
            .create_project(
                &self.alloc(),
                NewProject {
                    code: code.into(),
                    title: code.into(),
                    allocation: Allocation::default(),
                    starts_at: now,
                    expires_at: now + DAY * days,
                },
            )
            .expect("project")
    }

    /// Invites and registers a member through myaccessid, then logs them in.
    pub fn member(&self, inviter: &AuthSession, project: &Project, subject: &str, role: Role) -> AuthSession {
        let email = format!("{subject}@uni");
        let inv = self.p.registry.invite(inviter, &email, &project.project_id, role).expect("invite");
        let a = self.assertion("myaccessid", subject, &email);
        self.p.broker.register_identity(&a, &inv.token).expect("register");
        self.relogin(subject)
    }

    pub fn pi(&self, project: &Project, subject: &str) -> AuthSession {
        self.member(&self.alloc(), project, subject, Role::Pi)
    }

    pub fn researcher(&self, pi: &AuthSession, project: &Project, subject: &str) -> AuthSession {
        self.member(pi, project, subject, Role::Researcher)
    }

    /// Fresh myaccessid session for a member registered by `member`.
    pub fn relogin(&self, subject: &str) -> AuthSession {
        self.login("myaccessid", subject, &format!("{subject}@uni"))
    }

    pub fn register_jupyter(&self) {
        let token = self.p.tokens.issue_token(&self.admin(), "tunnel-admin", None, None).expect("tunnel-admin token").token;
        self.p.gateway.register_tunnel(&token, JUPYTER_PATH, JUPYTER_CLIENT).expect("tunnel");
    }

    pub fn event_count(&self) -> usize {
        self.p.siem.store().len()
    }
}

/// A user's SSH key pair, deterministic per label.
pub fn user_key(label: &str) -> (KeyPair, String) {
    let k = KeyPair::from_label(&format!("user-key:{label}"));
    let line = public_key_line(&k.public_bytes(), label);
    (k, line)
}
