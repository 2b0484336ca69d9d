//! Request ids and replay of retried writes.
//!
//! Every response carries `X-Request-Id`. A client that supplies its own id
//! on a write gets the first response back on a retry instead of a second
//! execution, so re-POSTing after a dropped connection is safe.

use std::collections::{HashMap, VecDeque};
use std::convert::Infallible;

use axum::body::{Body, Bytes};
use axum::extract::{FromRequestParts, Request, State};
use axum::http::request::Parts;
use axum::http::{HeaderMap, HeaderName, HeaderValue, Method, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use parking_lot::Mutex;

use gatekeep_core::audit::with_request_id;
use gatekeep_core::ids;

use crate::AppState;

pub const REQUEST_ID_HEADER: HeaderName = HeaderName::from_static("x-request-id");
pub const REPLAYED_HEADER: HeaderName = HeaderName::from_static("x-gatekeep-replayed");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestId(pub String);

impl RequestId {
    /// Runs a service call with this id attached to its audit events.
    pub fn scope<R>(&self, f: impl FnOnce() -> R) -> R {
        with_request_id(&self.0, f)
    }
}

impl<S: Send + Sync> FromRequestParts<S> for RequestId {
    type Rejection = Infallible;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        Ok(parts
            .extensions
            .get::<RequestId>()
            .cloned()
            .unwrap_or_else(|| RequestId(ids::prefixed("req", 12))))
    }
}

fn acceptable(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b':'))
}

#[derive(Clone)]
struct Stored {
    status: StatusCode,
    headers: HeaderMap,
    body: Bytes,
}

type ReplayKey = (String, Method, String, Option<HeaderValue>);

/// Completed writes by client-chosen request id, oldest evicted first.
pub struct ReplayCache {
    capacity: usize,
    inner: Mutex<(HashMap<ReplayKey, Stored>, VecDeque<ReplayKey>)>,
}

impl ReplayCache {
    pub fn new(capacity: usize) -> Self {
        ReplayCache {
            capacity,
            inner: Mutex::new((HashMap::new(), VecDeque::new())),
        }
    }

    fn get(&self, key: &ReplayKey) -> Option<Stored> {
        self.inner.lock().0.get(key).cloned()
    }

    fn put(&self, key: ReplayKey, value: Stored) {
        let mut guard = self.inner.lock();
        let (map, order) = &mut *guard;
        if map.insert(key.clone(), value).is_none() {
            order.push_back(key);
        }
        while order.len() > self.capacity {
            if let Some(old) = order.pop_front() {
                map.remove(&old);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Debug for ReplayCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReplayCache").field("len", &self.len()).finish()
    }
}

fn rebuild(stored: Stored, replayed: bool) -> Response {
    let mut response = Response::new(Body::from(stored.body));
    *response.status_mut() = stored.status;
    *response.headers_mut() = stored.headers;
    if replayed {
        response.headers_mut().insert(REPLAYED_HEADER, HeaderValue::from_static("true"));
    }
    response
}

pub async fn middleware(State(state): State<AppState>, mut request: Request, next: Next) -> Response {
    let supplied = request
        .headers()
        .get(&REQUEST_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|v| acceptable(v))
        .map(str::to_owned);
    let id = supplied.clone().unwrap_or_else(|| ids::prefixed("req", 12));
    request.extensions_mut().insert(RequestId(id.clone()));
    let header = HeaderValue::from_str(&id).expect("request id is header-safe");

    let writes = !matches!(*request.method(), Method::GET | Method::HEAD | Method::OPTIONS);
    let key = supplied.filter(|_| writes).map(|rid| {
        (
            rid,
            request.method().clone(),
            request.uri().path().to_owned(),
            request.headers().get(axum::http::header::AUTHORIZATION).cloned(),
        )
    });
    if let Some(hit) = key.as_ref().and_then(|k| state.replay.get(k)) {
        return rebuild(hit, true);
    }

    let mut response = next.run(request).await;
    response.headers_mut().insert(REQUEST_ID_HEADER, header);
    let Some(key) = key else {
        return response;
    };
    if response.status().is_server_error() {
        return response;
    }
    let (parts, body) = response.into_parts();
    match axum::body::to_bytes(body, usize::MAX).await {
        Ok(bytes) => {
            let stored = Stored {
                status: parts.status,
                headers: parts.headers,
                body: bytes,
            };
            state.replay.put(key, stored.clone());
            rebuild(stored, false)
        }
        Err(_) => StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    }
}
