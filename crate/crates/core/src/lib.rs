//! Multicast rate adaptation for dense WiFi deployments: a windowed
//! target-rate controller, baseline controllers, a K-worst feedback protocol,
//! and a deterministic interval-stepped simulator to compare them.

pub mod channel;
pub mod controller;
pub mod error;
pub mod exec;
pub mod export;
pub mod feedback;
pub mod rate;
pub mod scenario;
pub mod sim;
pub mod sla;
pub mod video;

pub use controller::{ControllerKind, RateAction};
pub use error::{Error, Result};
pub use exec::ExecMode;
pub use rate::Rate;
pub use scenario::{load_scenario, parse_scenario, Scenario};
pub use sim::{run, run_with, summarize, MetricsFrame, Summary, Trace};
