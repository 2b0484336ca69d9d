//! Reverse tunnels. A client inside the protected network connects out to
//! the gateway and serves requests that arrive over the connection. Here the
//! connection is a channel to a thread that owns the backend.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};

pub const CLAIMS_HEADER: &str = "X-Gatekeep-Claims";
/// Carries the caller's request id across the tunnel so backend audit
/// events join the same trail.
pub const REQUEST_ID_HEADER: &str = "X-Request-Id";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub method: String,
    pub path: String,
    pub headers: BTreeMap<String, String>,
    pub body: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub status: u16,
    pub body: String,
}

pub trait Backend: Send + Sync {
    fn handle(&self, request: BackendRequest) -> BackendResponse;
}

type Envelope = (BackendRequest, mpsc::Sender<BackendResponse>);

/// The gateway's end of a connected tunnel.
#[derive(Clone, Debug)]
pub struct TunnelConnection {
    tx: mpsc::Sender<Envelope>,
}

impl TunnelConnection {
    /// Starts the client side: a thread that feeds requests to `backend`
    /// until the gateway end is dropped.
    pub fn connect(client_id: &str, backend: Arc<dyn Backend>) -> Self {
        let (tx, rx) = mpsc::channel::<Envelope>();
        thread::Builder::new()
            .name(format!("tunnel-{client_id}"))
            .spawn(move || {
                for (request, reply) in rx {
                    let _ = reply.send(backend.handle(request));
                }
            })
            .expect("spawn tunnel client");
        TunnelConnection { tx }
    }

    /// None if the client side has gone away.
    pub fn forward(&self, request: BackendRequest) -> Option<BackendResponse> {
        let (reply_tx, reply_rx) = mpsc::channel();
        self.tx.send((request, reply_tx)).ok()?;
        reply_rx.recv().ok()
    }
}
