//! HTTP/JSON front end for the control plane. One router hosts the broker,
//! registry, token service, SSH CA, gateway and SIEM endpoints over a single
//! [`Platform`].

use std::sync::Arc;

use axum::routing::get;
use axum::Router;

use gatekeep_core::Platform;

pub mod auth;
pub mod broker;
pub mod error;
pub mod gateway;
pub mod registry;
pub mod request;
pub mod siem;
pub mod tokens;

pub use error::{ApiError, ErrorBody};
pub use request::{REPLAYED_HEADER, REQUEST_ID_HEADER};

#[derive(Clone)]
pub struct AppState {
    pub platform: Arc<Platform>,
    /// Mounts the assertion endpoint of the simulated IdPs.
    pub simulate_idps: bool,
    /// Believe `X-Forwarded-For` for the request source.
    pub trust_forwarded: bool,
    pub replay: Arc<request::ReplayCache>,
}

impl AppState {
    pub fn new(platform: Arc<Platform>) -> Self {
        AppState {
            platform,
            simulate_idps: false,
            trust_forwarded: false,
            replay: Arc::new(request::ReplayCache::new(4096)),
        }
    }

    pub fn simulate_idps(mut self, on: bool) -> Self {
        self.simulate_idps = on;
        self
    }

    pub fn trust_forwarded(mut self, on: bool) -> Self {
        self.trust_forwarded = on;
        self
    }
}

impl std::fmt::Debug for AppState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AppState")
            .field("simulate_idps", &self.simulate_idps)
            .field("trust_forwarded", &self.trust_forwarded)
            .finish_non_exhaustive()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .merge(broker::routes())
        .merge(registry::routes())
        .merge(tokens::routes())
        .merge(gateway::routes())
        .merge(siem::routes())
        .layer(axum::middleware::from_fn_with_state(state.clone(), request::middleware))
        .with_state(state)
}
