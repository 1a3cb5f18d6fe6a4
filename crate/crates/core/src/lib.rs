//! Discrete-event simulator and statistical verifier for a fully
//! distributed resource discovery and reservation protocol.
//!
//! Machines advertise themselves on a Zeroconf-style bus, clients discover
//! and reserve them one by one, launch a job on the reserved set, and
//! replace machines that die during execution. Every run is a pure
//! function of the scenario and a seed, and produces a text trace that the
//! [`verify`] module checks after the fact.

pub mod bus;
pub mod client;
pub mod error;
pub mod estimate;
pub mod kernel;
pub mod machine;
pub mod oracle;
pub mod scenario;
pub mod sim;
pub mod time;
pub mod verify;

pub use bus::{Bus, BusConfig};
pub use client::{ClientSpec, ContactOrder, Phase, RetryDelay, Semantics};
pub use error::{CartographyError, OracleError, ScenarioError, SimError, TraceError};
pub use estimate::{estimate, run_cartography, Estimate, ParameterGrid};
pub use kernel::message::{Action, ActorId, ClientId, JobId, MachineId, Message};
pub use kernel::random::{mix_seed, Probability, Randomness, Rng, SeededStreams};
pub use kernel::trace::{EdgeLabel, Entry, StateName, Trace, TraceRecord};
pub use kernel::NetConfig;
pub use machine::{IdleFailureMode, MachineParams};
pub use oracle::{oracle_probability, OracleResult};
pub use scenario::Scenario;
pub use sim::{simulate, Simulation};
pub use time::SimTime;
pub use verify::{check_completion, check_exclusive_access, Coverage, Property, PropertyResult};
