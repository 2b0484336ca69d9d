//! Federated single sign-on and zero-trust access control plane.
//!
//! The crate is organised around the services that make up the control plane:
//!
//! * [`broker`]: identity providers, federated identities and login sessions
//! * [`registry`]: projects, role bindings, invitations and Linux accounts
//! * [`token`]: short-lived audience-scoped access tokens
//! * [`sshca`]: the SSH certificate authority and client config rendering
//! * [`gateway`]: bastion, reverse tunnels, management tailnet and kill switches
//! * [`siem`]: audit ingestion, alerting, advisories and configuration assessment
//!
//! [`platform::Platform`] wires all of them together around one clock and one
//! audit sink.

pub mod audit;
pub mod broker;
pub mod clock;
pub mod crypto;
pub mod gateway;
pub mod ids;
pub mod platform;
pub mod registry;
pub mod siem;
pub mod sshca;
pub mod stubs;
pub mod token;

#[cfg(test)]
mod testkit;

pub use clock::{Clock, SystemClock, Timestamp, VirtualClock};
pub use platform::{Platform, PlatformConfig};
