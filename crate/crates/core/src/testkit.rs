//! A full platform on a virtual clock, for tests that cross services.

use std::sync::Arc;
use std::time::Duration;

use crate::broker::{AuthSession, IdPAssertion};
use crate::clock::{Clock, VirtualClock};
use crate::registry::{Allocation, NewProject, Project, Role};
use crate::{Platform, PlatformConfig};

pub const DAY: Duration = Duration::from_secs(86_400);

pub struct World {
    pub clock: Arc<VirtualClock>,
    pub p: Platform,
}

impl World {
    pub fn new() -> Self {
        let clock = Arc::new(VirtualClock::default());
        let config = PlatformConfig {
            bootstrap: vec![("admin@hpc".into(), Role::Admin), ("alloc@hpc".into(), Role::Allocator)],
            key_label: Some("testkit".into()),
            ..PlatformConfig::default()
        };
        let p = Platform::new(config, clock.clone()).unwrap();
        register_platform(&p, 0, "admin", "admin@hpc");
        register_platform(&p, 1, "alloc", "alloc@hpc");
        World { clock, p }
    }

    pub fn assertion(&self, idp: &str, subject: &str, email: &str) -> IdPAssertion {
        let sim = self.p.simulated_idp(idp).unwrap();
        sim.assert(subject, email, sim.provider().mfa_required, self.clock.now())
    }

    pub fn login(&self, idp: &str, subject: &str, email: &str) -> AuthSession {
        self.p.broker.authenticate(idp, &self.assertion(idp, subject, email)).unwrap()
    }

    pub fn fresh_alloc(&self) -> AuthSession {
        self.login("admin-cloud", "alloc", "alloc@hpc")
    }

    pub fn project(&self, code: &str, days: u32) -> Project {
        let now = self.clock.now();
        self.p
            .registry
            .create_project(
                &self.fresh_alloc(),
                NewProject {
                    code: code.into(),
                    title: code.into(),
                    allocation: Allocation::default(),
                    starts_at: now,
                    expires_at: now + DAY * days,
                },
            )
            .unwrap()
    }

    /// Registers a PI via the allocator's invitation.
    pub fn pi(&self, project: &Project, subject: &str) -> AuthSession {
        let email = format!("{subject}@uni");
        let inv = self.p.registry.invite(&self.fresh_alloc(), &email, &project.project_id, Role::Pi).unwrap();
        let a = self.assertion("myaccessid", subject, &email);
        self.p.broker.register_identity(&a, &inv.token).unwrap();
        self.login("myaccessid", subject, &email)
    }

    /// Registers a researcher invited by `pi`.
    pub fn researcher(&self, pi: &AuthSession, project: &Project, subject: &str) -> AuthSession {
        let email = format!("{subject}@uni");
        let inv = self.p.registry.invite(pi, &email, &project.project_id, Role::Researcher).unwrap();
        let a = self.assertion("myaccessid", subject, &email);
        self.p.broker.register_identity(&a, &inv.token).unwrap();
        self.login("myaccessid", subject, &email)
    }

    pub fn admin_token(&self, audience: &str) -> String {
        let admin = self.login("admin-cloud", "admin", "admin@hpc");
        self.p.tokens.issue_token(&admin, audience, None, None).unwrap().token
    }

    pub fn event_count(&self) -> usize {
        self.p.siem.store().len()
    }
}

fn register_platform(p: &Platform, idx: usize, subject: &str, email: &str) {
    let sim = p.simulated_idp("admin-cloud").unwrap();
    let a = sim.assert(subject, email, true, p.clock.now());
    p.broker.register_identity(&a, &p.bootstrap_invitations[idx].token).unwrap();
}
