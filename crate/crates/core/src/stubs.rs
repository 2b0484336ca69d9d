//! Backend stand-ins that sit behind tunnels. They do nothing except check
//! credentials and record what they saw.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::audit::with_request_id;
use crate::gateway::{Backend, BackendRequest, BackendResponse, CLAIMS_HEADER, REQUEST_ID_HEADER};
use crate::token::Introspector;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invocation {
    pub path: String,
    pub header_present: bool,
    pub header_validated: bool,
    /// Subject of the validated header.
    pub persistent_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Spawn {
    pub persistent_id: String,
    pub session_id: String,
    pub project_scope: Option<String>,
    pub server_url: String,
}

/// Jupyter's authenticator: re-validates the forwarded claims through
/// introspection and spawns one notebook server per auth session.
pub struct JupyterAuthenticator {
    introspector: Arc<dyn Introspector>,
    audience: String,
    introspections: AtomicUsize,
    log: Mutex<Vec<Invocation>>,
    spawns: Mutex<Vec<Spawn>>,
}

impl std::fmt::Debug for JupyterAuthenticator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JupyterAuthenticator").field("audience", &self.audience).finish_non_exhaustive()
    }
}

impl JupyterAuthenticator {
    pub fn new(introspector: Arc<dyn Introspector>, audience: &str) -> Self {
        JupyterAuthenticator {
            introspector,
            audience: audience.to_owned(),
            introspections: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
            spawns: Mutex::new(Vec::new()),
        }
    }

    pub fn invocations(&self) -> Vec<Invocation> {
        self.log.lock().clone()
    }

    pub fn spawns(&self) -> Vec<Spawn> {
        self.spawns.lock().clone()
    }

    pub fn introspection_count(&self) -> usize {
        self.introspections.load(Ordering::SeqCst)
    }

    fn reject(&self, path: String, header_present: bool) -> BackendResponse {
        self.log.lock().push(Invocation {
            path,
            header_present,
            header_validated: false,
            persistent_id: None,
        });
        BackendResponse {
            status: 401,
            body: r#"{"error":"unauthenticated"}"#.into(),
        }
    }
}

impl Backend for JupyterAuthenticator {
    fn handle(&self, request: BackendRequest) -> BackendResponse {
        let header = request
            .headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(CLAIMS_HEADER))
            .map(|(_, v)| v.clone());
        let Some(token) = header else {
            return self.reject(request.path, false);
        };
        self.introspections.fetch_add(1, Ordering::SeqCst);
        let introspect = || self.introspector.introspect(&token, &self.audience);
        let verdict = match request.headers.get(REQUEST_ID_HEADER) {
            Some(rid) => with_request_id(rid, introspect),
            None => introspect(),
        };
        let claims = match verdict {
            Ok(c) => c,
            Err(_) => return self.reject(request.path, true),
        };
        let server_url = format!("/user/{}/", claims.sub);
        {
            let mut spawns = self.spawns.lock();
            if !spawns.iter().any(|s| s.session_id == claims.sid) {
                spawns.push(Spawn {
                    persistent_id: claims.sub.clone(),
                    session_id: claims.sid.clone(),
                    project_scope: claims.project_scope.clone(),
                    server_url: server_url.clone(),
                });
            }
        }
        self.log.lock().push(Invocation {
            path: request.path,
            header_present: true,
            header_validated: true,
            persistent_id: Some(claims.sub.clone()),
        });
        let body = serde_json::json!({
            "user": claims.sub,
            "session": claims.sid,
            "server": server_url,
        });
        BackendResponse {
            status: 200,
            body: body.to_string(),
        }
    }
}
