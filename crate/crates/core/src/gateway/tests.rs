use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::audit::Outcome;
use crate::broker::AuthSession;
use crate::crypto::KeyPair;
use crate::registry::Project;
use crate::sshca::{public_key_line, SSH_CA_AUDIENCE};
use crate::stubs::JupyterAuthenticator;
use crate::testkit::World;

const JUPYTER: &str = "tunnel:jupyter";

struct Fx {
    w: World,
    jupyter: Arc<JupyterAuthenticator>,
    camels: Project,
    alice: AuthSession,
    bob: AuthSession,
}

impl Fx {
    fn new() -> Self {
        let w = World::new();
        let jupyter = Arc::new(JupyterAuthenticator::new(w.p.tokens.clone(), JUPYTER));
        w.p.gateway.connect_client("zenith-1", jupyter.clone());
        w.p.gateway
            .register_tunnel(&w.admin_token(TUNNEL_ADMIN_AUDIENCE), "/jupyter", "zenith-1")
            .unwrap();
        let camels = w.project("camels", 30);
        let alice = w.pi(&camels, "alice");
        let bob = w.researcher(&alice, &camels, "bob");
        Fx { w, jupyter, camels, alice, bob }
    }

    fn token(&self, who: &AuthSession, aud: &str) -> String {
        self.w.p.tokens.issue_token(who, aud, None, None).unwrap().token
    }

    fn get(&self, source: &str, token: Option<&str>) -> Result<BackendResponse, GatewayError> {
        self.w.p.gateway.route_web_request(source, req("/jupyter/hub"), token)
    }

    fn cert(&self, who: &AuthSession) -> String {
        let key = public_key_line(&KeyPair::from_label(&who.persistent_id).public_bytes(), "k");
        self.w.p.ca.sign_user_key(&self.token(who, SSH_CA_AUDIENCE), &key).unwrap().certificate
    }

    fn principal(&self, who: &AuthSession) -> String {
        self.w.p.registry.authorizations_for(&who.persistent_id).linux_accounts[0].username.clone()
    }

    fn kill(&self, scope: KillScope, engage: bool) {
        self.w
            .p
            .gateway
            .set_kill_switch(&self.w.admin_token(KILLSWITCH_AUDIENCE), &scope, engage)
            .unwrap();
    }

    fn user(&self, who: &AuthSession) -> KillScope {
        KillScope::User {
            persistent_id: who.persistent_id.clone(),
        }
    }
}

fn req(path: &str) -> BackendRequest {
    BackendRequest {
        method: "GET".into(),
        path: path.into(),
        headers: BTreeMap::new(),
        body: String::new(),
    }
}

#[test]
fn tunnel_paths() {
    assert_eq!(tunnel_service("/jupyter").as_deref(), Some("tunnel:jupyter"));
    assert_eq!(tunnel_service("jupyter"), None);
    assert_eq!(tunnel_service("/"), None);
    assert_eq!(tunnel_service("/a/b"), None);
    assert_eq!(tunnel_service("/Jupyter"), None);
}

#[test]
fn registering_tunnels() {
    let fx = Fx::new();
    let eps = fx.w.p.gateway.endpoints();
    assert_eq!(eps.len(), 1);
    assert_eq!(eps[0].state, EndpointState::Connected);
    assert_eq!(eps[0].service_id, JUPYTER);

    let admin = fx.w.admin_token(TUNNEL_ADMIN_AUDIENCE);
    let gw = &fx.w.p.gateway;
    assert_eq!(gw.register_tunnel(&admin, "/jupyter", "zenith-1"), Err(GatewayError::PathTaken));
    assert_eq!(gw.register_tunnel(&admin, "/grafana", "nobody"), Err(GatewayError::UnknownClient));
    assert_eq!(gw.register_tunnel(&admin, "bad path", "zenith-1"), Err(GatewayError::InvalidPath));
    let user = fx.token(&fx.alice, JUPYTER);
    assert!(matches!(
        gw.register_tunnel(&user, "/grafana", "zenith-1"),
        Err(GatewayError::TokenInvalid(_))
    ));
}

#[test]
fn no_token_never_reaches_the_backend() {
    let fx = Fx::new();
    assert_eq!(fx.get("1.2.3.4", None), Err(GatewayError::Unauthenticated));
    assert_eq!(fx.get("1.2.3.4", Some("")), Err(GatewayError::Unauthenticated));
    assert_eq!(fx.get("1.2.3.4", Some("forged.token.here")), Err(GatewayError::Unauthenticated));
    let wrong_audience = fx.token(&fx.alice, "portal");
    assert_eq!(fx.get("1.2.3.4", Some(&wrong_audience)), Err(GatewayError::Unauthenticated));
    assert!(fx.jupyter.invocations().is_empty());
}

#[test]
fn valid_token_spawns_a_session() {
    let fx = Fx::new();
    let token = fx.token(&fx.bob, JUPYTER);
    let resp = fx.get("1.2.3.4", Some(&token)).unwrap();
    assert_eq!(resp.status, 200);
    assert!(resp.body.contains(&fx.bob.persistent_id));
    let spawns = fx.jupyter.spawns();
    assert_eq!(spawns.len(), 1);
    assert_eq!(spawns[0].persistent_id, fx.bob.persistent_id);
    assert_eq!(spawns[0].project_scope.as_deref(), Some(fx.camels.project_id.as_str()));
    assert!(fx.jupyter.invocations().iter().all(|i| i.header_validated));
    assert_eq!(fx.jupyter.introspection_count(), 1);
    assert_eq!(fx.get("1.2.3.4", Some(&token)).map(|r| r.status), Ok(200));
    assert_eq!(fx.jupyter.spawns().len(), 1);
}

#[test]
fn unknown_path_and_disconnected_tunnel() {
    let fx = Fx::new();
    let token = fx.token(&fx.bob, JUPYTER);
    assert_eq!(
        fx.w.p.gateway.route_web_request("s", req("/grafana"), Some(&token)),
        Err(GatewayError::NotFound)
    );
    assert_eq!(
        fx.w.p.gateway.route_web_request("s", req("/jupyterx"), Some(&token)),
        Err(GatewayError::NotFound)
    );
    assert!(fx.w.p.gateway.disconnect_client("zenith-1"));
    for t in [None, Some(token.as_str())] {
        assert_eq!(fx.get("s", t), Err(GatewayError::EndpointDown));
    }
    assert!(fx.jupyter.invocations().is_empty());
    fx.w.p.gateway.connect_client("zenith-1", fx.jupyter.clone());
    assert_eq!(fx.get("s", Some(&token)).map(|r| r.status), Ok(200));
}

#[test]
fn rate_limit_per_source() {
    let fx = Fx::new();
    let token = fx.token(&fx.bob, JUPYTER);
    for _ in 0..30 {
        assert!(fx.get("flood", Some(&token)).is_ok());
    }
    assert_eq!(fx.get("flood", Some(&token)), Err(GatewayError::RateLimited));
    assert!(fx.get("calm", Some(&token)).is_ok());
    fx.w.clock.advance(std::time::Duration::from_secs(1));
    assert!(fx.get("flood", Some(&token)).is_ok());
}

#[test]
fn user_kill_switch_is_scoped() {
    let fx = Fx::new();
    let ta = fx.token(&fx.alice, JUPYTER);
    let tb = fx.token(&fx.bob, JUPYTER);
    fx.kill(fx.user(&fx.alice), true);
    assert_eq!(fx.get("a", Some(&ta)), Err(GatewayError::KillSwitched));
    assert_eq!(fx.get("b", Some(&tb)).map(|r| r.status), Ok(200));
    fx.kill(fx.user(&fx.alice), false);
    assert_eq!(fx.get("a", Some(&ta)).map(|r| r.status), Ok(200));
}

#[test]
fn global_switch_blocks_routes_and_bastion() {
    let fx = Fx::new();
    let cert = fx.cert(&fx.bob);
    let principal = fx.principal(&fx.bob);
    let tb = fx.token(&fx.bob, JUPYTER);
    fx.kill(KillScope::Global, true);
    assert_eq!(fx.get("b", Some(&tb)), Err(GatewayError::KillSwitched));
    assert_eq!(
        fx.w.p.gateway.open_bastion_session(&cert, &principal, "mdc.login-ai1"),
        Err(GatewayError::KillSwitched)
    );
    fx.kill(KillScope::Global, false);
    assert!(fx.w.p.gateway.open_bastion_session(&cert, &principal, "mdc.login-ai1").is_ok());
}

#[test]
fn kill_switch_needs_the_admin_audience() {
    let fx = Fx::new();
    let gw = &fx.w.p.gateway;
    let user = fx.token(&fx.alice, "portal");
    assert_eq!(gw.set_kill_switch(&user, &KillScope::Global, true), Err(GatewayError::Forbidden));
    let tailnet = fx.w.admin_token("mgmt:tailnet");
    assert_eq!(gw.set_kill_switch(&tailnet, &KillScope::Global, true), Err(GatewayError::Forbidden));
    let admin = fx.w.admin_token(KILLSWITCH_AUDIENCE);
    assert_eq!(gw.set_kill_switch(&admin, &KillScope::Global, false), Err(GatewayError::UnknownScope));
    let bogus = KillScope::Service {
        service_id: "nonsense".into(),
    };
    assert_eq!(gw.set_kill_switch(&admin, &bogus, true), Err(GatewayError::UnknownScope));
    assert!(gw.kill_switches().is_empty());
}

#[test]
fn bastion_sessions() {
    let fx = Fx::new();
    let gw = &fx.w.p.gateway;
    let cert = fx.cert(&fx.bob);
    let principal = fx.principal(&fx.bob);
    let s = gw.open_bastion_session(&cert, &principal, "mdc.login-ai1").unwrap();
    assert_eq!(s.persistent_id, fx.bob.persistent_id);
    assert_eq!(s.target, "mdc.login-ai1");
    assert_eq!(
        gw.open_bastion_session(&cert, &principal, "mdc.mgmt-ai1"),
        Err(GatewayError::UnknownTarget)
    );
    assert_eq!(
        gw.open_bastion_session(&cert, "root", "mdc.login-ai1"),
        Err(GatewayError::CertificateRejected(RejectReason::PrincipalNotListed))
    );
    assert_eq!(
        gw.open_bastion_session("not a cert", &principal, "mdc.login-ai1"),
        Err(GatewayError::CertificateRejected(RejectReason::BadSignature))
    );
    fx.w.clock.advance(std::time::Duration::from_secs(8 * 3600));
    assert_eq!(
        gw.open_bastion_session(&cert, &principal, "mdc.login-ai1"),
        Err(GatewayError::CertificateRejected(RejectReason::Expired))
    );
}

#[test]
fn user_switch_severs_open_bastion_sessions() {
    let fx = Fx::new();
    let gw = &fx.w.p.gateway;
    let (ca, pa) = (fx.cert(&fx.alice), fx.principal(&fx.alice));
    let (cb, pb) = (fx.cert(&fx.bob), fx.principal(&fx.bob));
    gw.open_bastion_session(&ca, &pa, "mdc.login-ai1").unwrap();
    gw.open_bastion_session(&cb, &pb, "mdc.login-i3").unwrap();
    fx.kill(fx.user(&fx.alice), true);
    let open = gw.open_bastion_sessions();
    assert_eq!(open.len(), 1);
    assert_eq!(open[0].persistent_id, fx.bob.persistent_id);
    assert_eq!(gw.open_bastion_session(&ca, &pa, "mdc.login-ai1"), Err(GatewayError::KillSwitched));
    assert!(gw.open_bastion_session(&cb, &pb, "mdc.login-ai1").is_ok());

    fx.kill(
        KillScope::Service {
            service_id: BASTION_SERVICE.into(),
        },
        true,
    );
    assert!(gw.open_bastion_sessions().is_empty());
    assert_eq!(gw.open_bastion_session(&cb, &pb, "mdc.login-ai1"), Err(GatewayError::KillSwitched));
}

#[test]
fn every_bastion_session_has_one_accepting_event() {
    let fx = Fx::new();
    let gw = &fx.w.p.gateway;
    let (cb, pb) = (fx.cert(&fx.bob), fx.principal(&fx.bob));
    for i in 0..5 {
        gw.open_bastion_session(&cb, &pb, "mdc.login-ai1").unwrap();
        let _ = gw.open_bastion_session(&cb, "nope", "mdc.login-ai1");
        if i == 2 {
            let _ = gw.open_bastion_session(&cb, &pb, "elsewhere");
        }
    }
    let events = fx.w.p.siem.store().snapshot();
    for s in gw.bastion_sessions() {
        let n = events
            .iter()
            .filter(|e| {
                e.action == "bastion.open"
                    && e.outcome == Outcome::Allow
                    && e.attrs.get("session_ref") == Some(&s.session_ref)
            })
            .count();
        assert_eq!(n, 1);
    }
    let allows = events
        .iter()
        .filter(|e| e.action == "bastion.open" && e.outcome == Outcome::Allow)
        .count();
    assert_eq!(allows, gw.bastion_sessions().len());
}

#[test]
fn management_gateway_accepts_only_tailnet_tokens() {
    let fx = Fx::new();
    let mgmt = &fx.w.p.mgmt;
    let tailnet = fx.w.admin_token("mgmt:tailnet");
    let s = mgmt.connect(Some(&tailnet), "mdc.mgmt-ai1").unwrap();
    assert_eq!(s.node, "mdc.mgmt-ai1");
    assert_eq!(mgmt.connect(Some(&tailnet), "mdc.login-ai1"), Err(GatewayError::UnknownTarget));
    assert_eq!(mgmt.connect(None, "mdc.mgmt-ai1"), Err(GatewayError::Unauthenticated));
    let ks = fx.w.admin_token(KILLSWITCH_AUDIENCE);
    assert!(matches!(
        mgmt.connect(Some(&ks), "mdc.mgmt-ai1"),
        Err(GatewayError::TokenInvalid(TokenError::AudienceMismatch { .. }))
    ));
    let user = fx.token(&fx.alice, JUPYTER);
    assert!(matches!(mgmt.connect(Some(&user), "mdc.mgmt-ai1"), Err(GatewayError::TokenInvalid(_))));
    assert!(fx.w.p.tokens.issue_token(&fx.alice, "mgmt:tailnet", None, None).is_err());
    fx.w.clock.advance(std::time::Duration::from_secs(900));
    assert_eq!(
        mgmt.connect(Some(&tailnet), "mdc.mgmt-ai1"),
        Err(GatewayError::TokenInvalid(TokenError::Expired))
    );
}

#[derive(Clone, Debug)]
enum Op {
    Engage(u8),
    Release(u8),
    Route { who: u8, with_token: bool, forged: bool },
    Disconnect,
    Reconnect,
}

fn arb_op() -> impl Strategy<Value = Op> {
    prop_oneof![
        1 => (0u8..4).prop_map(Op::Engage),
        1 => (0u8..4).prop_map(Op::Release),
        4 => (0u8..2, any::<bool>(), any::<bool>()).prop_map(|(who, with_token, forged)| Op::Route { who, with_token, forged }),
        1 => Just(Op::Disconnect),
        1 => Just(Op::Reconnect),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    // The backend only ever sees validated headers, and a request is let
    // through exactly when no engaged switch covers it.
    #[test]
    fn routing_matches_switch_oracle(ops in prop::collection::vec(arb_op(), 1..40)) {
        let fx = Fx::new();
        let users = [fx.alice.clone(), fx.bob.clone()];
        let tokens = [fx.token(&users[0], JUPYTER), fx.token(&users[1], JUPYTER)];
        let scopes = [
            fx.user(&users[0]),
            fx.user(&users[1]),
            KillScope::Service { service_id: JUPYTER.into() },
            KillScope::Global,
        ];
        let mut engaged = [false; 4];
        let mut connected = true;
        for (i, op) in ops.into_iter().enumerate() {
            match op {
                Op::Engage(s) => {
                    fx.kill(scopes[s as usize].clone(), true);
                    engaged[s as usize] = true;
                }
                Op::Release(s) => {
                    let admin = fx.w.admin_token(KILLSWITCH_AUDIENCE);
                    let r = fx.w.p.gateway.set_kill_switch(&admin, &scopes[s as usize], false);
                    let ever = fx.w.p.board.list().iter().any(|k| k.scope == scopes[s as usize]);
                    prop_assert_eq!(r.is_ok(), ever);
                    engaged[s as usize] = false;
                }
                Op::Disconnect => {
                    fx.w.p.gateway.disconnect_client("zenith-1");
                    connected = false;
                }
                Op::Reconnect => {
                    fx.w.p.gateway.connect_client("zenith-1", fx.jupyter.clone());
                    connected = true;
                }
                Op::Route { who, with_token, forged } => {
                    let mut t = tokens[who as usize].clone();
                    if forged {
                        t.push('x');
                    }
                    let token = with_token.then_some(t.as_str());
                    let got = fx.get(&format!("src{i}"), token);
                    let expected = if !connected {
                        Err(GatewayError::EndpointDown)
                    } else if !with_token || forged {
                        Err(GatewayError::Unauthenticated)
                    } else if engaged[who as usize] || engaged[2] || engaged[3] {
                        Err(GatewayError::KillSwitched)
                    } else {
                        Ok(200)
                    };
                    prop_assert_eq!(got.map(|r| r.status), expected);
                }
            }
        }
        prop_assert!(fx.jupyter.invocations().iter().all(|i| i.header_present && i.header_validated));
    }
}
