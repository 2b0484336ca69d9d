//! Management-plane gateway. A separate instance that accepts one audience
//! and knows only management nodes.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::audit::{Auditor, ANONYMOUS};
use crate::clock::{Clock, Timestamp};
use crate::token::{TokenError, TokenService};

pub const TAILNET_AUDIENCE: &str = "mgmt:tailnet";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MgmtSession {
    pub persistent_id: String,
    pub node: String,
    pub opened_at: Timestamp,
}

pub struct ManagementGateway {
    clock: Arc<dyn Clock>,
    tokens: Arc<TokenService>,
    auditor: Auditor,
    nodes: BTreeSet<String>,
}

impl std::fmt::Debug for ManagementGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManagementGateway").field("nodes", &self.nodes).finish_non_exhaustive()
    }
}

impl ManagementGateway {
    pub fn new(
        nodes: impl IntoIterator<Item = String>,
        clock: Arc<dyn Clock>,
        tokens: Arc<TokenService>,
        auditor: Auditor,
    ) -> Self {
        ManagementGateway {
            clock,
            tokens,
            auditor,
            nodes: nodes.into_iter().collect(),
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &String> {
        self.nodes.iter()
    }

    pub fn connect(&self, admin_token: Option<&str>, node: &str) -> Result<MgmtSession, GatewayError> {
        let mut actor = ANONYMOUS.to_owned();
        let result = (|| {
            let token = admin_token.filter(|t| !t.is_empty()).ok_or(GatewayError::Unauthenticated)?;
            let claims = self.tokens.verify(token, TAILNET_AUDIENCE).map_err(|e| match e {
                TokenError::KillSwitched => GatewayError::KillSwitched,
                other => GatewayError::TokenInvalid(other),
            })?;
            actor = claims.sub.clone();
            if !self.nodes.contains(node) {
                return Err(GatewayError::UnknownTarget);
            }
            Ok(MgmtSession {
                persistent_id: claims.sub,
                node: node.to_owned(),
                opened_at: self.clock.now(),
            })
        })();
        let attrs = [("node", node.to_owned())];
        match &result {
            Ok(_) => self.auditor.allow(&actor, "mgmt.connect", attrs),
            Err(e) => self.auditor.deny(&actor, "mgmt.connect", e.code(), attrs),
        }
        result
    }
}
