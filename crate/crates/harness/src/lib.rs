//! Simulation harness: the zone topology, a reachability oracle over it, the
//! scripted user stories and a concurrent stress mode, all running against
//! live service instances on a virtual clock.

pub mod adversarial;
pub mod env;
pub mod principals;
pub mod reach;
pub mod scenario;
pub mod stories;
pub mod stress;
pub mod topology;

pub use env::Env;
pub use reach::{check_reachability, enumerate_access_matrix, AccessMatrix, CredentialSet, ReachError, Reachability};
pub use scenario::{Expect, ScenarioFailed, Transcript};
pub use stories::run_scenario;
pub use topology::{build_default_topology, ZoneGraph};
