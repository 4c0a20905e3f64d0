//! Quadcopter autopilot simulator with retrospective-cost adaptive control
//! (RCAC) and deadzone-protected gain adaptation.
//!
//! The crate contains a rigid-body quadcopter model, a PX4-style cascaded
//! autopilot whose four linear blocks can each be augmented by an RCAC
//! controller, three smooth and non-smooth deadzones for the rate-loop
//! adaptation, a Hilbert-curve mission generator, offline metrics and an
//! experiment harness.

pub mod autopilot;
pub mod config;
pub mod deadzone;
pub mod error;
pub mod filter;
pub mod harness;
pub mod log;
pub mod metrics;
pub mod mission;
pub mod rcac;
pub mod vehicle;

pub use autopilot::{Autopilot, AutopilotConfig, ControlOutputs};
pub use config::ScenarioConfig;
pub use deadzone::{DeadzoneConfig, DeadzoneKind};
pub use error::{Error, Result};
pub use harness::{compare, run_scenario, simulate, ComparisonTable, Variant};
pub use log::{FlightLog, LogRow};
pub use metrics::{MetricsConfig, MetricsReport};
pub use mission::{MissionConfig, MissionPlan};
pub use rcac::{GainStructure, RcacConfig, RcacState};
