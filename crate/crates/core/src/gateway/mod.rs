//! The access gateway: the SSH bastion, authenticated reverse-tunnel ingress
//! for web services, and the kill switches that sit in front of both.

pub mod killswitch;
pub mod mgmt;
pub mod rate;
pub mod tunnel;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use ed25519_dalek::VerifyingKey;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

pub use killswitch::{KillScope, KillSwitch, KillSwitchBoard, SwitchState, BASTION_SERVICE, KILLSWITCH_AUDIENCE};
pub use mgmt::{ManagementGateway, MgmtSession};
pub use rate::RateLimiter;
pub use tunnel::{Backend, BackendRequest, BackendResponse, TunnelConnection, CLAIMS_HEADER, REQUEST_ID_HEADER};

use crate::audit::{Auditor, ANONYMOUS};
use crate::clock::{Clock, Timestamp};
use crate::ids;
use crate::sshca::{verify_certificate, RejectReason, SshCertificate};
use crate::token::{AudienceClass, TokenError, TokenService};

pub const TUNNEL_ADMIN_AUDIENCE: &str = "tunnel-admin";

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("path is already registered")]
    PathTaken,
    #[error("tunnel path must look like /name")]
    InvalidPath,
    #[error("no tunnel client with that id is connected")]
    UnknownClient,
    #[error("token rejected: {0}")]
    TokenInvalid(TokenError),
    #[error("authentication required")]
    Unauthenticated,
    #[error("access blocked by kill switch")]
    KillSwitched,
    #[error("tunnel endpoint is down")]
    EndpointDown,
    #[error("no such endpoint")]
    NotFound,
    #[error("rate limit exceeded")]
    RateLimited,
    #[error("certificate rejected: {0}")]
    CertificateRejected(RejectReason),
    #[error("unknown target")]
    UnknownTarget,
    #[error("forbidden")]
    Forbidden,
    #[error("unknown kill-switch scope")]
    UnknownScope,
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::PathTaken => "PathTaken",
            GatewayError::InvalidPath => "InvalidPath",
            GatewayError::UnknownClient => "UnknownClient",
            GatewayError::TokenInvalid(_) => "TokenInvalid",
            GatewayError::Unauthenticated => "Unauthenticated",
            GatewayError::KillSwitched => "KillSwitched",
            GatewayError::EndpointDown => "EndpointDown",
            GatewayError::NotFound => "NotFound",
            GatewayError::RateLimited => "RateLimited",
            GatewayError::CertificateRejected(_) => "CertificateRejected",
            GatewayError::UnknownTarget => "UnknownTarget",
            GatewayError::Forbidden => "Forbidden",
            GatewayError::UnknownScope => "UnknownScope",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointState {
    Connected,
    Disconnected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TunnelEndpoint {
    pub path: String,
    pub service_id: String,
    pub client_id: String,
    pub state: EndpointState,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BastionSession {
    pub session_ref: String,
    pub persistent_id: String,
    pub principal: String,
    pub certificate_serial: u64,
    pub target: String,
    pub opened_at: Timestamp,
    pub closed_at: Option<Timestamp>,
}

#[derive(Debug)]
struct Client {
    connection: TunnelConnection,
    connected: bool,
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub login_nodes: Vec<String>,
    pub rate_limit_per_second: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            login_nodes: vec!["mdc.login-ai1".into(), "mdc.login-i3".into()],
            rate_limit_per_second: 30,
        }
    }
}

pub struct AccessGateway {
    clock: Arc<dyn Clock>,
    tokens: Arc<TokenService>,
    ca_key: VerifyingKey,
    board: Arc<KillSwitchBoard>,
    web_audit: Auditor,
    ssh_audit: Auditor,
    login_nodes: BTreeSet<String>,
    limiter: RateLimiter,
    clients: RwLock<HashMap<String, Client>>,
    endpoints: RwLock<BTreeMap<String, TunnelEndpoint>>,
    sessions: Mutex<Vec<BastionSession>>,
}

impl std::fmt::Debug for AccessGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AccessGateway").field("login_nodes", &self.login_nodes).finish_non_exhaustive()
    }
}

fn tunnel_service(path: &str) -> Option<String> {
    let name = path.strip_prefix('/')?;
    let ok = !name.is_empty()
        && name.len() <= 32
        && name.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-');
    ok.then(|| format!("tunnel:{name}"))
}

impl AccessGateway {
    /// `web_audit` records tunnel ingress, `ssh_audit` the bastion and the
    /// kill switches.
    pub fn new(
        config: GatewayConfig,
        clock: Arc<dyn Clock>,
        tokens: Arc<TokenService>,
        ca_key: VerifyingKey,
        board: Arc<KillSwitchBoard>,
        web_audit: Auditor,
        ssh_audit: Auditor,
    ) -> Self {
        AccessGateway {
            clock,
            tokens,
            ca_key,
            board,
            web_audit,
            ssh_audit,
            login_nodes: config.login_nodes.into_iter().collect(),
            limiter: RateLimiter::new(config.rate_limit_per_second),
            clients: RwLock::new(HashMap::new()),
            endpoints: RwLock::new(BTreeMap::new()),
            sessions: Mutex::new(Vec::new()),
        }
    }

    pub fn board(&self) -> &Arc<KillSwitchBoard> {
        &self.board
    }

    pub fn login_nodes(&self) -> impl Iterator<Item = &String> {
        self.login_nodes.iter()
    }

    /// A tunnel client dials in from inside the protected network.
    pub fn connect_client(&self, client_id: &str, backend: Arc<dyn Backend>) {
        let connection = TunnelConnection::connect(client_id, backend);
        self.clients.write().insert(
            client_id.to_owned(),
            Client {
                connection,
                connected: true,
            },
        );
        self.set_client_state(client_id, EndpointState::Connected);
    }

    pub fn disconnect_client(&self, client_id: &str) -> bool {
        let found = match self.clients.write().get_mut(client_id) {
            Some(c) => {
                c.connected = false;
                true
            }
            None => false,
        };
        self.set_client_state(client_id, EndpointState::Disconnected);
        found
    }

    fn set_client_state(&self, client_id: &str, state: EndpointState) {
        for ep in self.endpoints.write().values_mut() {
            if ep.client_id == client_id {
                ep.state = state;
            }
        }
    }

    pub fn endpoints(&self) -> Vec<TunnelEndpoint> {
        self.endpoints.read().values().cloned().collect()
    }

    pub fn register_tunnel(&self, service_token: &str, path: &str, client_id: &str) -> Result<TunnelEndpoint, GatewayError> {
        let mut actor = ANONYMOUS.to_owned();
        let result = (|| {
            let claims = self
                .tokens
                .verify(service_token, TUNNEL_ADMIN_AUDIENCE)
                .map_err(GatewayError::TokenInvalid)?;
            actor = claims.sub;
            let service_id = tunnel_service(path).ok_or(GatewayError::InvalidPath)?;
            let connected = self
                .clients
                .read()
                .get(client_id)
                .map(|c| c.connected)
                .ok_or(GatewayError::UnknownClient)?;
            let mut endpoints = self.endpoints.write();
            if endpoints.contains_key(path) {
                return Err(GatewayError::PathTaken);
            }
            let endpoint = TunnelEndpoint {
                path: path.to_owned(),
                service_id,
                client_id: client_id.to_owned(),
                state: if connected {
                    EndpointState::Connected
                } else {
                    EndpointState::Disconnected
                },
            };
            endpoints.insert(path.to_owned(), endpoint.clone());
            Ok(endpoint)
        })();
        let attrs = vec![("path", path.to_owned()), ("client_id", client_id.to_owned())];
        match &result {
            Ok(_) => self.web_audit.allow(&actor, "tunnel.register", attrs),
            Err(e) => self.web_audit.deny(&actor, "tunnel.register", e.code(), attrs),
        }
        result
    }

    fn endpoint_for(&self, path: &str) -> Option<TunnelEndpoint> {
        self.endpoints
            .read()
            .values()
            .find(|ep| path == ep.path || path.starts_with(&format!("{}/", ep.path)))
            .cloned()
    }

    /// Authenticated ingress. The token is checked for the endpoint's own
    /// audience before anything is forwarded, and the backend receives the
    /// signed token in the claims header so it can check it again.
    pub fn route_web_request(
        &self,
        source: &str,
        request: BackendRequest,
        user_token: Option<&str>,
    ) -> Result<BackendResponse, GatewayError> {
        let now = self.clock.now();
        let mut actor = ANONYMOUS.to_owned();
        let path = request.path.clone();
        let result = (|| {
            if !self.limiter.admit(source, now) {
                return Err(GatewayError::RateLimited);
            }
            let endpoint = self.endpoint_for(&request.path).ok_or(GatewayError::NotFound)?;
            if endpoint.state != EndpointState::Connected {
                return Err(GatewayError::EndpointDown);
            }
            let token = user_token.filter(|t| !t.is_empty()).ok_or(GatewayError::Unauthenticated)?;
            let claims = self.tokens.verify(token, &endpoint.service_id).map_err(|e| match e {
                TokenError::KillSwitched => GatewayError::KillSwitched,
                _ => GatewayError::Unauthenticated,
            })?;
            actor = claims.sub.clone();
            let connection = {
                let clients = self.clients.read();
                match clients.get(&endpoint.client_id) {
                    Some(c) if c.connected => c.connection.clone(),
                    _ => return Err(GatewayError::EndpointDown),
                }
            };
            let mut request = request;
            request.headers.retain(|k, _| !k.eq_ignore_ascii_case(CLAIMS_HEADER));
            request.headers.insert(CLAIMS_HEADER.to_owned(), token.to_owned());
            if let Some(rid) = crate::audit::current_request_id() {
                request.headers.insert(REQUEST_ID_HEADER.to_owned(), rid);
            }
            connection.forward(request).ok_or(GatewayError::EndpointDown)
        })();
        let attrs = vec![("path", path), ("source", source.to_owned())];
        match &result {
            Ok(r) => self.web_audit.allow(&actor, "gateway.route", {
                let mut a = attrs;
                a.push(("status", r.status.to_string()));
                a
            }),
            Err(e) => self.web_audit.deny(&actor, "gateway.route", e.code(), attrs),
        }
        result
    }

    /// The bastion hop. The bastion adds nothing of its own: it checks the
    /// certificate for the presented principal and records the session.
    pub fn open_bastion_session(
        &self,
        certificate: &str,
        principal: &str,
        target: &str,
    ) -> Result<BastionSession, GatewayError> {
        let now = self.clock.now();
        let mut actor = ANONYMOUS.to_owned();
        let mut serial = None;
        let result = (|| {
            if !self.login_nodes.contains(target) {
                return Err(GatewayError::UnknownTarget);
            }
            if self.board.blocks_request(None, BASTION_SERVICE) {
                return Err(GatewayError::KillSwitched);
            }
            let cert = SshCertificate::from_openssh(certificate)
                .map_err(|_| GatewayError::CertificateRejected(RejectReason::BadSignature))?;
            verify_certificate(&cert, principal, now, &self.ca_key).map_err(GatewayError::CertificateRejected)?;
            actor = cert.key_id.clone();
            serial = Some(cert.serial);
            if self.board.blocks_request(Some(&cert.key_id), BASTION_SERVICE) {
                return Err(GatewayError::KillSwitched);
            }
            let session = BastionSession {
                session_ref: ids::prefixed("bst", 9),
                persistent_id: cert.key_id.clone(),
                principal: principal.to_owned(),
                certificate_serial: cert.serial,
                target: target.to_owned(),
                opened_at: now,
                closed_at: None,
            };
            self.sessions.lock().push(session.clone());
            Ok(session)
        })();
        let mut attrs = vec![("principal", principal.to_owned()), ("target", target.to_owned())];
        if let Some(s) = serial {
            attrs.push(("serial", s.to_string()));
        }
        match &result {
            Ok(s) => {
                attrs.push(("session_ref", s.session_ref.clone()));
                self.ssh_audit.allow(&actor, "bastion.open", attrs)
            }
            Err(e) => {
                if let GatewayError::CertificateRejected(r) = e {
                    attrs.push(("detail", r.to_string()));
                }
                self.ssh_audit.deny(&actor, "bastion.open", e.code(), attrs)
            }
        }
        result
    }

    pub fn close_bastion_session(&self, session_ref: &str) -> bool {
        let now = self.clock.now();
        let mut sessions = self.sessions.lock();
        match sessions.iter_mut().find(|s| s.session_ref == session_ref && s.closed_at.is_none()) {
            Some(s) => {
                s.closed_at = Some(now);
                true
            }
            None => false,
        }
    }

    pub fn bastion_sessions(&self) -> Vec<BastionSession> {
        self.sessions.lock().clone()
    }

    pub fn open_bastion_sessions(&self) -> Vec<BastionSession> {
        self.sessions.lock().iter().filter(|s| s.closed_at.is_none()).cloned().collect()
    }

    fn known_service(&self, service_id: &str) -> bool {
        service_id == BASTION_SERVICE
            || AudienceClass::of(service_id).is_some()
            || self.endpoints.read().values().any(|e| e.service_id == service_id)
    }

    /// Engages or releases a switch. Takes effect for every decision that
    /// starts after this returns. Engaging also severs open bastion sessions
    /// the switch covers.
    pub fn set_kill_switch(&self, admin_token: &str, scope: &KillScope, engage: bool) -> Result<KillSwitch, GatewayError> {
        let now = self.clock.now();
        let mut actor = ANONYMOUS.to_owned();
        let result = (|| {
            let claims = self
                .tokens
                .verify(admin_token, KILLSWITCH_AUDIENCE)
                .map_err(|_| GatewayError::Forbidden)?;
            actor = claims.sub.clone();
            match scope {
                KillScope::User { persistent_id } if persistent_id.is_empty() => return Err(GatewayError::UnknownScope),
                KillScope::Service { service_id } if !self.known_service(service_id) => {
                    return Err(GatewayError::UnknownScope)
                }
                _ => {}
            }
            if !engage {
                return self.board.release(scope, now).ok_or(GatewayError::UnknownScope);
            }
            let switch = self.board.engage(scope.clone(), &claims.sub, now);
            let mut sessions = self.sessions.lock();
            for s in sessions.iter_mut().filter(|s| s.closed_at.is_none()) {
                if self.board.blocks_request(Some(&s.persistent_id), BASTION_SERVICE) {
                    s.closed_at = Some(now);
                }
            }
            Ok(switch)
        })();
        let attrs = vec![
            ("scope", scope.to_string()),
            ("engage", engage.to_string()),
        ];
        match &result {
            Ok(_) => self.ssh_audit.allow(&actor, "killswitch.set", attrs),
            Err(e) => self.ssh_audit.deny(&actor, "killswitch.set", e.code(), attrs),
        }
        result
    }

    pub fn kill_switches(&self) -> Vec<KillSwitch> {
        self.board.list()
    }
}

#[cfg(test)]
mod tests;
