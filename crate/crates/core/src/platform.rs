//! One deployment of every service, sharing a clock, a session store and an
//! audit pipeline that feeds the SIEM.

use std::path::PathBuf;
use std::sync::Arc;

use crate::audit::{AuditSink, Auditor, SourceDomain};
use crate::broker::{BrokerConfig, IdentityBroker, IdpRegistry, SessionStore, SimulatedIdp};
use crate::clock::Clock;
use crate::crypto::KeyPair;
use crate::gateway::{AccessGateway, GatewayConfig, KillSwitchBoard, ManagementGateway};
use crate::registry::{Invitation, ProjectRegistry, RegistryConfig, Role};
use crate::siem::{EventStore, Siem, SiemSink};
use crate::sshca::{CaConfig, CertificateAuthority, SshConfigParams};
use crate::token::{TokenConfig, TokenService};

#[derive(Debug, Clone)]
pub struct PlatformConfig {
    pub cluster_domain: String,
    pub jump_host: String,
    pub login_nodes: Vec<String>,
    pub mgmt_nodes: Vec<String>,
    /// Event files and the notification outbox go here. None keeps
    /// everything in memory.
    pub state_dir: Option<PathBuf>,
    /// Platform-role invitations minted at startup, so the first
    /// administrator and allocator can register.
    pub bootstrap: Vec<(String, Role)>,
    pub idps: Vec<SimulatedIdp>,
    /// Labels for deterministic signing keys. None generates fresh keys.
    pub key_label: Option<String>,
    pub rate_limit_per_second: u32,
    pub broker: BrokerConfig,
    pub registry: RegistryConfig,
    pub tokens: TokenConfig,
    pub ca: CaConfig,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            cluster_domain: "aip1.example".into(),
            jump_host: "bastion.aip1.example".into(),
            login_nodes: GatewayConfig::default().login_nodes,
            mgmt_nodes: vec!["mdc.mgmt-ai1".into(), "mdc.mgmt-i3".into()],
            state_dir: None,
            bootstrap: Vec::new(),
            idps: SimulatedIdp::default_fixture(),
            key_label: None,
            rate_limit_per_second: GatewayConfig::default().rate_limit_per_second,
            broker: BrokerConfig::default(),
            registry: RegistryConfig::default(),
            tokens: TokenConfig::default(),
            ca: CaConfig::default(),
        }
    }
}

#[derive(Debug)]
pub enum PlatformError {
    Io(std::io::Error),
    Config(String),
}

impl std::fmt::Display for PlatformError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlatformError::Io(e) => write!(f, "state directory: {e}"),
            PlatformError::Config(e) => write!(f, "configuration: {e}"),
        }
    }
}

impl std::error::Error for PlatformError {}

pub struct Platform {
    pub config: PlatformConfig,
    pub clock: Arc<dyn Clock>,
    pub sessions: Arc<SessionStore>,
    pub siem: Arc<Siem>,
    pub broker: Arc<IdentityBroker>,
    pub registry: Arc<ProjectRegistry>,
    pub tokens: Arc<TokenService>,
    pub ca: Arc<CertificateAuthority>,
    pub board: Arc<KillSwitchBoard>,
    pub gateway: Arc<AccessGateway>,
    pub mgmt: Arc<ManagementGateway>,
    pub bootstrap_invitations: Vec<Invitation>,
}

impl std::fmt::Debug for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Platform").field("config", &self.config).finish_non_exhaustive()
    }
}

fn key(label: &Option<String>, purpose: &str) -> KeyPair {
    match label {
        Some(l) => KeyPair::from_label(&format!("{l}:{purpose}")),
        None => KeyPair::generate(),
    }
}

impl Platform {
    pub fn new(mut config: PlatformConfig, clock: Arc<dyn Clock>) -> Result<Self, PlatformError> {
        let store = match &config.state_dir {
            Some(dir) => {
                if config.registry.outbox_path.is_none() {
                    config.registry.outbox_path = Some(dir.join("outbox.jsonl"));
                }
                EventStore::open(dir.join("siem")).map_err(PlatformError::Io)?
            }
            None => EventStore::in_memory(),
        };
        let store = Arc::new(store);
        let siem = Arc::new(Siem::new(store.clone()));
        let sink: Arc<dyn AuditSink> = Arc::new(SiemSink::new(store, clock.clone()));
        let fds = Auditor::new(SourceDomain::Fds, sink.clone());
        let sws = Auditor::new(SourceDomain::Sws, sink.clone());

        let sessions = Arc::new(SessionStore::new());
        let registry = Arc::new(ProjectRegistry::new(
            config.registry.clone(),
            clock.clone(),
            sessions.clone(),
            fds.clone(),
        ));
        let idps = IdpRegistry::new(config.idps.iter().map(|i| i.provider().clone()))
            .map_err(|e| PlatformError::Config(e.to_string()))?;
        let broker = Arc::new(IdentityBroker::new(
            config.broker.clone(),
            idps,
            clock.clone(),
            sessions.clone(),
            registry.clone(),
            fds.clone(),
        ));
        let tokens = Arc::new(TokenService::new(
            config.tokens.clone(),
            key(&config.key_label, "token"),
            clock.clone(),
            sessions.clone(),
            registry.clone(),
            fds.clone(),
        ));
        registry.subscribe(tokens.clone());
        let board = Arc::new(KillSwitchBoard::new());
        tokens.set_kill_switch_probe(board.clone());
        let ca = Arc::new(CertificateAuthority::new(
            config.ca.clone(),
            key(&config.key_label, "ssh-ca"),
            clock.clone(),
            tokens.clone(),
            registry.clone(),
            fds,
        ));
        let gateway = Arc::new(AccessGateway::new(
            GatewayConfig {
                login_nodes: config.login_nodes.clone(),
                rate_limit_per_second: config.rate_limit_per_second,
            },
            clock.clone(),
            tokens.clone(),
            ca.public_key(),
            board.clone(),
            sws.clone(),
            sws.clone(),
        ));
        let mgmt = Arc::new(ManagementGateway::new(
            config.mgmt_nodes.clone(),
            clock.clone(),
            tokens.clone(),
            sws,
        ));
        let bootstrap_invitations = config
            .bootstrap
            .iter()
            .map(|(email, role)| registry.bootstrap_invitation(email, *role))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PlatformError::Config(e.to_string()))?;
        Ok(Platform {
            config,
            clock,
            sessions,
            siem,
            broker,
            registry,
            tokens,
            ca,
            board,
            gateway,
            mgmt,
            bootstrap_invitations,
        })
    }

    pub fn simulated_idp(&self, idp_id: &str) -> Option<&SimulatedIdp> {
        self.config.idps.iter().find(|i| i.idp_id() == idp_id)
    }

    pub fn ssh_params(&self, identity_file: Option<String>) -> SshConfigParams {
        SshConfigParams {
            cluster_domain: self.config.cluster_domain.clone(),
            jump_host: self.config.jump_host.clone(),
            identity_file,
        }
    }
}
