#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use gatekeep_core::registry::Role;
use gatekeep_core::stubs::JupyterAuthenticator;
use gatekeep_core::token::Introspector;
use gatekeep_core::{Clock, Platform, PlatformConfig, Timestamp, VirtualClock};
use gatekeep_server::{router, AppState};

pub const DAY: u64 = 86_400;

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Value,
    pub text: String,
}

impl Reply {
    pub fn error(&self) -> &str {
        self.body["error"].as_str().unwrap_or("")
    }

    pub fn str(&self, key: &str) -> String {
        self.body[key].as_str().unwrap_or_else(|| panic!("{key} missing in {}", self.text)).to_owned()
    }
}

pub struct Fixture {
    pub clock: Arc<VirtualClock>,
    pub platform: Arc<Platform>,
    pub app: Router,
    pub jupyter: Arc<JupyterAuthenticator>,
}

impl Fixture {
    pub fn new() -> Self {
        let clock = Arc::new(VirtualClock::new(Timestamp(1_767_225_600)));
        let config = PlatformConfig {
            bootstrap: vec![("admin@hpc".into(), Role::Admin), ("alloc@hpc".into(), Role::Allocator)],
            key_label: Some("server-tests".into()),
            ..PlatformConfig::default()
        };
        let platform = Arc::new(Platform::new(config, clock.clone()).unwrap());
        let introspector: Arc<dyn Introspector> = platform.tokens.clone();
        let jupyter = Arc::new(JupyterAuthenticator::new(introspector, "tunnel:jupyter"));
        platform.gateway.connect_client("zenith-1", jupyter.clone());
        let state = AppState::new(platform.clone()).simulate_idps(true).trust_forwarded(true);
        Fixture {
            clock,
            app: router(state),
            platform,
            jupyter,
        }
    }

    pub fn advance(&self, secs: u64) {
        self.clock.advance(Duration::from_secs(secs));
    }

    pub fn now(&self) -> i64 {
        self.clock.now().0
    }

    pub async fn send(&self, request: Request<Body>) -> Reply {
        let response = self.app.clone().oneshot(request).await.unwrap();
        let status = response.status();
        let headers = response.headers().clone();
        let bytes = response.into_body().collect().await.unwrap().to_bytes();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let body = serde_json::from_str(&text).unwrap_or(Value::Null);
        Reply {
            status,
            headers,
            body,
            text,
        }
    }

    pub async fn call(&self, method: Method, path: &str, bearer: Option<&str>, body: Option<Value>) -> Reply {
        self.call_with(method, path, bearer, body, &[]).await
    }

    pub async fn call_with(
        &self,
        method: Method,
        path: &str,
        bearer: Option<&str>,
        body: Option<Value>,
        headers: &[(&str, &str)],
    ) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(b) = bearer {
            req = req.header("authorization", format!("Bearer {b}"));
        }
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        };
        self.send(req.unwrap()).await
    }

    pub async fn get(&self, path: &str, bearer: Option<&str>) -> Reply {
        self.call(Method::GET, path, bearer, None).await
    }

    pub async fn post(&self, path: &str, bearer: Option<&str>, body: Value) -> Reply {
        self.call(Method::POST, path, bearer, Some(body)).await
    }

    pub async fn delete(&self, path: &str, bearer: Option<&str>) -> Reply {
        self.call(Method::DELETE, path, bearer, None).await
    }

    pub async fn assertion(&self, idp: &str, subject: &str, email: &str) -> Value {
        let r = self
            .post(&format!("/simulate/{idp}/assert"), None, json!({"subject": subject, "email": email}))
            .await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text);
        r.body
    }

    /// Logs in and returns the session id.
    pub async fn login(&self, idp: &str, subject: &str, email: &str) -> String {
        let a = self.assertion(idp, subject, email).await;
        let r = self.post("/authenticate", None, a).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text);
        r.str("session_id")
    }

    pub async fn register(&self, idp: &str, subject: &str, email: &str, invitation: &str) -> Reply {
        let a = self.assertion(idp, subject, email).await;
        self.post("/register", None, json!({"assertion": a, "invitation_token": invitation}))
            .await
    }

    pub async fn admin(&self) -> String {
        self.bootstrap(0, "admin", "admin@hpc").await
    }

    pub async fn alloc(&self) -> String {
        self.bootstrap(1, "alloc", "alloc@hpc").await
    }

    async fn bootstrap(&self, idx: usize, subject: &str, email: &str) -> String {
        let inv = self.platform.bootstrap_invitations[idx].token.clone();
        let a = self.assertion("admin-cloud", subject, email).await;
        if self.platform.broker.resolve_persistent_id("admin-cloud", subject).is_err() {
            let r = self.post("/register", None, json!({"assertion": a, "invitation_token": inv})).await;
            assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
        }
        self.login("admin-cloud", subject, email).await
    }

    /// Creates a project as the allocator and returns its id.
    pub async fn project(&self, code: &str, days: u64) -> String {
        let alloc = self.alloc().await;
        let r = self
            .post(
                "/projects",
                Some(&alloc),
                json!({
                    "code": code,
                    "title": format!("Project {code}"),
                    "allocation": {"gpu_hours": 1000, "storage_gb": 500},
                    "expires_at": self.now() + (days * DAY) as i64,
                }),
            )
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
        r.str("project_id")
    }

    /// Invites, registers and logs in a project member. Returns
    /// (persistent id, session id).
    pub async fn member(&self, inviter: &str, project: &str, subject: &str, role: &str) -> (String, String) {
        let email = format!("{subject}@uni");
        let r = self
            .post(
                &format!("/projects/{project}/invitations"),
                Some(inviter),
                json!({"email": email, "role": role}),
            )
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
        let token = r.str("token");
        let r = self.register("myaccessid", subject, &email, &token).await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
        let pid = r.str("persistent_id");
        (pid, self.login("myaccessid", subject, &email).await)
    }

    /// A project with a PI. Returns (project id, pi pid, pi session).
    pub async fn pi_project(&self, code: &str) -> (String, String, String) {
        let project = self.project(code, 30).await;
        let alloc = self.alloc().await;
        let (pid, sid) = self.member(&alloc, &project, &format!("{code}-pi"), "pi").await;
        (project, pid, sid)
    }

    pub async fn token(&self, session: &str, audience: &str) -> Reply {
        self.post("/token", Some(session), json!({"audience": audience})).await
    }

    pub async fn token_str(&self, session: &str, audience: &str) -> String {
        let r = self.token(session, audience).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text);
        r.str("token")
    }

    pub async fn register_jupyter(&self) {
        let admin = self.admin().await;
        let t = self.token_str(&admin, "tunnel-admin").await;
        let r = self
            .post("/tunnels", Some(&t), json!({"path": "/jupyter", "client_id": "zenith-1"}))
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
    }

    pub async fn jupyter(&self, token: Option<&str>, source: &str) -> Reply {
        self.call_with(Method::GET, "/t/jupyter/hub/login", token, None, &[("x-forwarded-for", source)])
            .await
    }

    pub fn events_with(&self, request_id: &str) -> Vec<gatekeep_core::audit::AuditEvent> {
        self.platform
            .siem
            .store()
            .snapshot()
            .into_iter()
            .filter(|e| e.request_id == request_id)
            .collect()
    }
}
