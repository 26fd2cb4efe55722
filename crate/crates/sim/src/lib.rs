//! Deterministic discrete-event simulator for mobile ad hoc networks:
//! AODV/DSR reactive routing with an optional triple-factor security
//! layer (watchdog-based direct trust, report-based distributed
//! reputation, per-packet MAC verification), configurable adversaries,
//! and CSV metrics output.

pub mod adversary;
pub mod crypto;
pub mod engine;
pub mod experiment;
pub mod kernel;
pub mod metrics;
pub mod packet;
pub mod routing;
pub mod scenario;
pub mod trust;
pub mod types;

pub use engine::{run_once, DeliveryRecord, RunOutput, Simulation};
pub use experiment::{run_experiment, ExperimentResult};
pub use scenario::{
    parse_scenario, parse_scenario_str, ScenarioConfig, ScenarioError, SecurityMode,
};
pub use types::{NodeId, SimTime};
