mod common;

use axum::http::{Method, StatusCode};
use serde_json::json;

use common::Fixture;

#[tokio::test]
async fn discovery_lists_providers_and_filters_by_kind() {
    let f = Fixture::new();
    let all = f.get("/idps", None).await;
    assert_eq!(all.status, StatusCode::OK);
    let ids: Vec<&str> = all.body.as_array().unwrap().iter().map(|p| p["idp_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["last-resort", "myaccessid"]);

    let admin = f.get("/idps?kind=admin", None).await;
    let ids: Vec<&str> = admin.body.as_array().unwrap().iter().map(|p| p["idp_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["admin-cloud"]);

    let bad = f.get("/idps?kind=social", None).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    assert_eq!(bad.error(), "BadRequest");
}

#[tokio::test]
async fn unregistered_login_is_refused() {
    let f = Fixture::new();
    let a = f.assertion("myaccessid", "stranger", "stranger@uni").await;
    let r = f.post("/authenticate", None, a).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    assert_eq!(r.error(), "UnregisteredIdentity");
}

#[tokio::test]
async fn tampered_assertion_is_refused() {
    let f = Fixture::new();
    f.pi_project("camels").await;
    let mut a = f.assertion("myaccessid", "camels-pi", "camels-pi@uni").await;
    a["subject"] = json!("someone-else");
    let r = f.post("/authenticate", None, a).await;
    assert_eq!(r.error(), "BadAssertion");
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn malformed_body_is_a_json_error() {
    let f = Fixture::new();
    let r = f.post("/authenticate", None, json!({"idp_id": 3})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.error(), "BadRequest");
}

#[tokio::test]
async fn platform_invitation_through_federated_idp_needs_admin_idp() {
    let f = Fixture::new();
    let token = f.platform.bootstrap_invitations[0].token.clone();
    let r = f.register("myaccessid", "sneaky", "admin@hpc", &token).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    assert_eq!(r.error(), "AdminIdPRequired");
}

#[tokio::test]
async fn viewer_context_reports_server_side_roles() {
    let f = Fixture::new();
    let (project, pi_pid, pi) = f.pi_project("camels").await;
    let ctx = f.get("/session", Some(&pi)).await;
    assert_eq!(ctx.status, StatusCode::OK, "{}", ctx.text);
    assert_eq!(ctx.str("persistent_id"), pi_pid);
    assert_eq!(ctx.str("email"), "camels-pi@uni");
    assert_eq!(ctx.str("idp_kind"), "federated");
    assert_eq!(ctx.body["expires_in_secs"], 600);
    assert_eq!(ctx.body["roles"][0]["role"], "pi");
    assert_eq!(ctx.body["projects"][0]["code"], "camels");
    assert_eq!(ctx.body["linux_accounts"][0]["username"], "camels-0001");
    let perms: Vec<(String, Option<String>)> = ctx.body["permissions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p["action"].as_str().unwrap().to_owned(), p["project_id"].as_str().map(str::to_owned)))
        .collect();
    assert_eq!(
        perms,
        [
            ("invite_researcher".to_owned(), Some(project.clone())),
            ("revoke_researcher".to_owned(), Some(project)),
        ]
    );

    f.advance(120);
    let later = f.get("/session", Some(&pi)).await;
    assert_eq!(later.body["expires_in_secs"], 480);

    let alloc = f.alloc().await;
    let ctx = f.get("/session", Some(&alloc)).await;
    let actions: Vec<&str> = ctx.body["permissions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["action"].as_str().unwrap())
        .collect();
    assert_eq!(
        actions,
        [
            "create_project",
            "invite_pi",
            "revoke_researcher",
            "revoke_pi",
            "revoke_project",
            "sweep_expiry",
            "view_others_authorizations"
        ]
    );
}

#[tokio::test]
async fn session_endpoint_requires_live_session() {
    let f = Fixture::new();
    let none = f.get("/session", None).await;
    assert_eq!(none.status, StatusCode::UNAUTHORIZED);
    assert_eq!(none.error(), "Unauthenticated");

    let bogus = f.get("/session", Some("ses_nope")).await;
    assert_eq!(bogus.error(), "UnknownSession");

    let admin = f.admin().await;
    f.advance(600);
    let expired = f.get("/session", Some(&admin)).await;
    assert_eq!(expired.status, StatusCode::UNAUTHORIZED);
    assert_eq!(expired.error(), "SessionExpired");
}

#[tokio::test]
async fn device_flow_hands_the_cli_its_own_session() {
    let f = Fixture::new();
    let (_, pi_pid, pi) = f.pi_project("camels").await;

    let grant = f.post("/device/start", None, json!({})).await;
    assert_eq!(grant.status, StatusCode::OK);
    let device_code = grant.str("device_code");
    let user_code = grant.str("user_code");
    assert!(grant.body["interval_secs"].as_u64().unwrap() > 0);

    let pending = f.post("/device/poll", None, json!({"device_code": device_code})).await;
    assert_eq!(pending.body["status"], "pending");

    let anon = f.post("/device/approve", None, json!({"user_code": user_code})).await;
    assert_eq!(anon.status, StatusCode::UNAUTHORIZED);

    let wrong = f.post("/device/approve", Some(&pi), json!({"user_code": "ZZZZ-ZZZZ"})).await;
    assert_eq!(wrong.status, StatusCode::NOT_FOUND);

    let ok = f.post("/device/approve", Some(&pi), json!({"user_code": user_code})).await;
    assert_eq!(ok.status, StatusCode::OK, "{}", ok.text);
    assert_eq!(ok.body["approved"], true);

    let done = f.post("/device/poll", None, json!({"device_code": device_code})).await;
    assert_eq!(done.body["status"], "approved");
    let device_session = done.body["session"]["session_id"].as_str().unwrap().to_owned();
    assert_ne!(device_session, pi);
    assert_eq!(done.body["session"]["persistent_id"], pi_pid.as_str());

    let again = f.post("/device/poll", None, json!({"device_code": device_code})).await;
    assert_eq!(again.body["status"], "invalid");

    let ctx = f.get("/session", Some(&device_session)).await;
    assert_eq!(ctx.str("persistent_id"), pi_pid);
}

#[tokio::test]
async fn device_grant_expires() {
    let f = Fixture::new();
    let grant = f.post("/device/start", None, json!({})).await;
    f.advance(601);
    let r = f.post("/device/poll", None, json!({"device_code": grant.str("device_code")})).await;
    assert_eq!(r.body["status"], "expired");
}

#[tokio::test]
async fn link_and_resolve() {
    let f = Fixture::new();
    let (_, pi_pid, pi) = f.pi_project("camels").await;
    let extra = f.assertion("last-resort", "vendor-42", "camels-pi@uni").await;
    let r = f.post("/link", Some(&pi), json!({"assertion": extra})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    assert_eq!(r.str("persistent_id"), pi_pid);

    let own = f.get("/resolve?idp_id=last-resort&subject=vendor-42", Some(&pi)).await;
    assert_eq!(own.str("persistent_id"), pi_pid);

    let admin = f.admin().await;
    let other = f.get("/resolve?idp_id=myaccessid&subject=camels-pi", Some(&admin)).await;
    assert_eq!(other.str("persistent_id"), pi_pid);
    let missing = f.get("/resolve?idp_id=myaccessid&subject=ghost", Some(&admin)).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);

    let snoop = f.get("/resolve?idp_id=admin-cloud&subject=admin", Some(&pi)).await;
    assert_eq!(snoop.status, StatusCode::FORBIDDEN);
    let snoop_missing = f.get("/resolve?idp_id=myaccessid&subject=ghost", Some(&pi)).await;
    assert_eq!(snoop_missing.status, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn suspension_ends_sessions_and_blocks_login() {
    let f = Fixture::new();
    let (_, pi_pid, pi) = f.pi_project("camels").await;
    let denied = f.post(&format!("/identities/{pi_pid}/suspend"), Some(&pi), json!({})).await;
    assert_eq!(denied.status, StatusCode::FORBIDDEN);

    let admin = f.admin().await;
    let r = f.post(&format!("/identities/{pi_pid}/suspend"), Some(&admin), json!({})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    assert_eq!(r.body["sessions_revoked"], 1);
    assert_eq!(f.get("/session", Some(&pi)).await.status, StatusCode::UNAUTHORIZED);

    let a = f.assertion("myaccessid", "camels-pi", "camels-pi@uni").await;
    let r = f.post("/authenticate", None, a).await;
    assert_eq!(r.error(), "IdentitySuspended");
    assert_eq!(r.status, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn simulated_idp_endpoint_is_off_by_default() {
    let platform = std::sync::Arc::new(
        gatekeep_core::Platform::new(
            gatekeep_core::PlatformConfig::default(),
            std::sync::Arc::new(gatekeep_core::SystemClock),
        )
        .unwrap(),
    );
    let app = gatekeep_server::router(gatekeep_server::AppState::new(platform));
    let f = Fixture { app, ..Fixture::new() };
    let r = f
        .call(
            Method::POST,
            "/simulate/myaccessid/assert",
            None,
            Some(json!({"subject": "x", "email": "x@uni"})),
        )
        .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}
